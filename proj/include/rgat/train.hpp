#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rgat/classify.hpp"
#include "rgat/config.hpp"
#include "rgat/decoder.hpp"
#include "rgat/eval.hpp"
#include "rgat/graph.hpp"
#include "rgat/layer.hpp"
#include "rgat/optim.hpp"

namespace rgat {

// ---- datasets -------------------------------------------------------------------

struct LpDataset {
    Vocab vocab;
    std::vector<Triplet> train, valid, test;
    MultiRelGraph graph;
    FilterIndex filter;

    static LpDataset load(const std::string& train_path, const std::string& valid_path,
                          const std::string& test_path) {
        LpDataset d;
        d.train = load_triplets(train_path, d.vocab);
        d.vocab.augment_relations();
        if (!valid_path.empty()) d.valid = load_triplets(valid_path, d.vocab);
        if (!test_path.empty()) d.test = load_triplets(test_path, d.vocab);
        d.graph = build_graph(d.train, d.vocab);
        d.filter = FilterIndex::build(d.train, d.valid, d.test, d.vocab);
        return d;
    }

    static LpDataset load(const RunConfig& cfg) {
        return load(cfg.train_path, cfg.valid_path, cfg.test_path);
    }
};

struct EcDataset {
    Vocab vocab;
    std::vector<Triplet> train;
    MultiRelGraph graph;
    LabelSet labels;

    static EcDataset load(const RunConfig& cfg) {
        EcDataset d;
        d.train = load_triplets(cfg.train_path, d.vocab);
        d.vocab.augment_relations();
        d.graph = build_graph(d.train, d.vocab);
        d.labels = load_labels(cfg.labels_path, cfg.split_path, d.vocab);
        return d;
    }
};

// ---- pipelines ------------------------------------------------------------------

// Model + decoder + parameters for link prediction, constructed deterministically
// from (config, dataset sizes).
struct LpPipeline {
    ModelConfig model_cfg;
    QattConfig qatt_cfg;
    std::unique_ptr<RgatModel> model;
    std::unique_ptr<QattDecoder> decoder;
    ParamStore store;

    LpPipeline(const RunConfig& cfg, const LpDataset& data) {
        model_cfg = cfg.to_model_config();
        qatt_cfg = cfg.to_qatt_config();
        model = std::make_unique<RgatModel>(model_cfg, data.graph.num_entities(),
                                            data.graph.n_relations_aug);
        decoder = std::make_unique<QattDecoder>(qatt_cfg, model_cfg);
        Rng rng(mix_seed(cfg.seed, 0x1217));
        model->init_params(store, rng);
        decoder->init_params(store, rng);
    }

    RankReport evaluate_split(const LpDataset& data, std::span<const Triplet> split,
                              uint64_t seed) const {
        return evaluate(model_score_fn(*model, *decoder, data.graph), split, data.filter,
                        data.vocab, seed);
    }
};

// Encoder + linear classifier head for entity classification.
struct EcPipeline {
    ModelConfig model_cfg;
    std::unique_ptr<RgatModel> model;
    ParamStore store;
    Param* w_cls = nullptr;

    EcPipeline(const RunConfig& cfg, const EcDataset& data) {
        model_cfg = cfg.to_model_config();
        model = std::make_unique<RgatModel>(model_cfg, data.graph.num_entities(),
                                            data.graph.n_relations_aug);
        Rng rng(mix_seed(cfg.seed, 0x1217));
        model->init_params(store, rng);
        w_cls = &store.create("classifier.weight",
                              glorot_uniform(data.labels.num_classes,
                                             model_cfg.final_entity_dim(), rng));
    }

    Array probabilities(const MultiRelGraph& graph) const {
        Tape t;
        EncoderOut enc = model->forward(t, graph);
        return t.val(class_probabilities(t, enc.entity, t.param(*w_cls)));
    }
};

// ---- metric log -----------------------------------------------------------------

// Append-only "epoch TAB metric TAB value" lines. No timestamps: identical runs
// must produce identical bytes.
class MetricLog {
public:
    explicit MetricLog(std::ostream* sink) : sink_(sink) {}

    void record(int64_t epoch, const std::string& metric, double value) {
        if (sink_ == nullptr) return;
        std::ostringstream os;
        os << epoch << '\t' << metric << '\t' << std::setprecision(12) << value << '\n';
        (*sink_) << os.str();
        sink_->flush();
    }

private:
    std::ostream* sink_;
};

struct TrainResult {
    double best_metric = 0.0;
    int64_t best_epoch = 0;
    int64_t epochs_run = 0;
    double final_train_loss = 0.0;
    bool early_stopped = false;
    std::string checkpoint_path;
};

// ---- link prediction training ----------------------------------------------------

// 1-N training over (subject, relation) pairs with BCE against multi-hot
// targets; the encoder runs full-graph every step. Validation MRR (on the valid
// split when present, otherwise on train) drives checkpointing and early stop.
inline TrainResult train_lp(LpPipeline& pipe, const LpDataset& data, const RunConfig& cfg,
                            std::ostream* metric_sink = nullptr) {
    cfg.validate();
    MetricLog log(metric_sink);
    QueryBatchIndex queries = QueryBatchIndex::build(data.train, data.vocab);
    const int64_t n_entities = data.graph.num_entities();

    std::vector<size_t> order(queries.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5481));

    const std::span<const Triplet> val_split = data.valid.empty() ? data.train : data.valid;
    const AdamConfig adam = cfg.to_adam_config();

    TrainResult result;
    result.best_metric = -1.0;
    int64_t evals_since_best = 0;
    std::string ckpt_path;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        ckpt_path = (std::filesystem::path(cfg.out_dir) / "best.ckpt").string();
    }

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;  // weighted by pairs: the epoch loss is the true
        double pair_count = 0.0;  // per-pair mean, independent of batch boundaries
        int64_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> batch_idx(order.begin() + static_cast<int64_t>(start),
                                          order.begin() + static_cast<int64_t>(stop));
            std::vector<QueryPair> batch;
            batch.reserve(batch_idx.size());
            for (size_t i : batch_idx) batch.push_back(queries.pairs[i]);
            const Array labels = queries.labels_for(batch_idx, n_entities);

            double loss_value = 0.0;
            try {
                Tape t;
                ForwardOpts opts;
                opts.training = true;
                opts.dropout_seed = mix_seed(cfg.seed, static_cast<uint64_t>(epoch) * 1000003ull +
                                                           static_cast<uint64_t>(n_batches));
                EncoderOut enc = pipe.model->forward(t, data.graph, opts);
                Var scores = pipe.decoder->score_queries(t, enc, batch);
                Var loss = bce_loss(t, scores, labels, cfg.label_smoothing);
                loss_value = t.val(loss)[0];
                t.backward(loss);
            } catch (const NumericError& e) {
                throw Error("train-lp: diverged at epoch " + std::to_string(epoch) + ": " +
                            e.what());
            }
            if (!std::isfinite(loss_value))
                throw Error("train-lp: diverged at epoch " + std::to_string(epoch) +
                            ": non-finite loss");
            pipe.store.adam_step(adam);
            loss_sum += loss_value * static_cast<double>(batch.size());
            pair_count += static_cast<double>(batch.size());
            ++n_batches;
        }
        const double epoch_loss = loss_sum / std::max(1.0, pair_count);
        result.final_train_loss = epoch_loss;
        result.epochs_run = epoch;
        log.record(epoch, "train_loss", epoch_loss);

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const RankReport rep = pipe.evaluate_split(data, val_split, cfg.seed);
            log.record(epoch, "valid_mrr", rep.mrr);
            if (rep.mrr > result.best_metric) {
                result.best_metric = rep.mrr;
                result.best_epoch = epoch;
                evals_since_best = 0;
                if (!ckpt_path.empty()) {
                    CheckpointMeta meta{cfg.hash(), static_cast<uint32_t>(epoch), rep.mrr};
                    save_checkpoint(pipe.store, meta, ckpt_path);
                    result.checkpoint_path = ckpt_path;
                }
            } else if (++evals_since_best >= cfg.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    return result;
}

// ---- entity classification training ----------------------------------------------

// Full-batch CE over the labeled training entities, one optimizer step per
// epoch; validation accuracy (valid split if present, else train) drives
// checkpointing and early stop.
inline TrainResult train_ec(EcPipeline& pipe, const EcDataset& data, const RunConfig& cfg,
                            std::ostream* metric_sink = nullptr) {
    cfg.validate();
    MetricLog log(metric_sink);
    const std::span<const int64_t> val_ids =
        data.labels.valid_ids.empty() ? std::span<const int64_t>(data.labels.train_ids)
                                      : std::span<const int64_t>(data.labels.valid_ids);
    const AdamConfig adam = cfg.to_adam_config();

    TrainResult result;
    result.best_metric = -1.0;
    int64_t evals_since_best = 0;
    std::string ckpt_path;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        ckpt_path = (std::filesystem::path(cfg.out_dir) / "best.ckpt").string();
    }

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_value = 0.0;
        try {
            Tape t;
            ForwardOpts opts;
            opts.training = true;
            opts.dropout_seed = mix_seed(cfg.seed, static_cast<uint64_t>(epoch));
            EncoderOut enc = pipe.model->forward(t, data.graph, opts);
            Var probs = class_probabilities(t, enc.entity, t.param(*pipe.w_cls));
            Var loss = ce_loss(t, probs, data.labels, data.labels.train_ids);
            loss_value = t.val(loss)[0];
            t.backward(loss);
        } catch (const NumericError& e) {
            throw Error("train-ec: diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(loss_value))
            throw Error("train-ec: diverged at epoch " + std::to_string(epoch) +
                        ": non-finite loss");
        pipe.store.adam_step(adam);
        result.final_train_loss = loss_value;
        result.epochs_run = epoch;
        log.record(epoch, "train_loss", loss_value);

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const double acc = accuracy(pipe.probabilities(data.graph), data.labels, val_ids);
            log.record(epoch, "valid_accuracy", acc);
            if (acc > result.best_metric) {
                result.best_metric = acc;
                result.best_epoch = epoch;
                evals_since_best = 0;
                if (!ckpt_path.empty()) {
                    CheckpointMeta meta{cfg.hash(), static_cast<uint32_t>(epoch), acc};
                    save_checkpoint(pipe.store, meta, ckpt_path);
                    result.checkpoint_path = ckpt_path;
                }
            } else if (++evals_since_best >= cfg.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    return result;
}

// ---- channel sweep ----------------------------------------------------------------

struct SweepRow {
    int64_t channels = 0;
    int64_t param_count = 0;  // encoder parameters, identical across K
    double best_metric = 0.0;
    int64_t best_epoch = 0;
    bool failed = false;
    std::string error;
};

struct SweepTable {
    std::vector<SweepRow> rows;

    std::string render() const {
        std::ostringstream os;
        os << std::left << std::setw(6) << "K" << std::setw(16) << "encoder_params" << std::setw(14)
           << "best_metric" << std::setw(12) << "best_epoch" << "status\n";
        for (const SweepRow& r : rows) {
            os << std::left << std::setw(6) << r.channels << std::setw(16) << r.param_count;
            if (r.failed) {
                os << std::setw(14) << "-" << std::setw(12) << "-" << "failed: " << r.error << "\n";
            } else {
                os << std::setw(14) << std::fixed << std::setprecision(6) << r.best_metric
                   << std::setw(12) << r.best_epoch << "ok\n";
            }
        }
        return os.str();
    }
};

// Runs one training per K. A failing run marks its row and the sweep continues.
// Each run gets its own subdirectory of cfg.out_dir.
inline SweepTable sweep_channels(const RunConfig& base_cfg, const LpDataset& data,
                                 std::span<const int64_t> k_values,
                                 std::ostream* progress = nullptr) {
    SweepTable table;
    for (int64_t k : k_values) {
        SweepRow row;
        row.channels = k;
        RunConfig cfg = base_cfg;
        cfg.channels = k;
        if (!base_cfg.out_dir.empty())
            cfg.out_dir = (std::filesystem::path(base_cfg.out_dir) / ("k" + std::to_string(k))).string();
        try {
            cfg.validate();
            LpPipeline pipe(cfg, data);
            // the K-invariant quantity: decoder widths scale with the channel
            // count when query_dim tracks the channel width
            row.param_count = pipe.model->encoder_param_count();
            std::ofstream metrics;
            if (!cfg.out_dir.empty()) {
                std::filesystem::create_directories(cfg.out_dir);
                metrics.open(std::filesystem::path(cfg.out_dir) / "metrics.tsv",
                             std::ios::binary | std::ios::trunc);
            }
            TrainResult res = train_lp(pipe, data, cfg, metrics.is_open() ? &metrics : nullptr);
            row.best_metric = res.best_metric;
            row.best_epoch = res.best_epoch;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        if (progress != nullptr)
            (*progress) << "sweep: K=" << k << (row.failed ? " failed" : " done") << "\n";
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace rgat
