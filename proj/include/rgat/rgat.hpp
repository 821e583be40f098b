#pragma once

// Multi-channel relational graph attention for link prediction and entity
// classification on knowledge graphs, with a self-contained reverse-mode
// autodiff engine, protocol-exact filtered ranking, and attention inspection.

#include "rgat/classify.hpp"
#include "rgat/config.hpp"
#include "rgat/core.hpp"
#include "rgat/decoder.hpp"
#include "rgat/eval.hpp"
#include "rgat/graph.hpp"
#include "rgat/inspect.hpp"
#include "rgat/layer.hpp"
#include "rgat/optim.hpp"
#include "rgat/synth.hpp"
#include "rgat/tape.hpp"
#include "rgat/train.hpp"
