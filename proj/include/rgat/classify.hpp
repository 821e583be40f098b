#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rgat/graph.hpp"
#include "rgat/layer.hpp"
#include "rgat/tape.hpp"

namespace rgat {

// Gold classes for a labeled subset of entities, split into train/valid/test.
struct LabelSet {
    int64_t num_classes = 0;
    std::vector<int64_t> class_of;  // per entity id; -1 when unlabeled
    std::vector<int64_t> train_ids;
    std::vector<int64_t> valid_ids;
    std::vector<int64_t> test_ids;

    void validate() const {
        if (num_classes < 1) throw ConfigError("labels: need at least one class");
        std::vector<int8_t> seen(class_of.size(), 0);
        auto check = [&](std::span<const int64_t> ids, const char* split) {
            for (int64_t id : ids) {
                if (id < 0 || id >= static_cast<int64_t>(class_of.size()))
                    throw ConfigError(std::string("labels: ") + split + " id out of range");
                const int64_t c = class_of[static_cast<size_t>(id)];
                if (c < 0 || c >= num_classes)
                    throw ConfigError(std::string("labels: ") + split + " entity has no valid class");
                if (seen[static_cast<size_t>(id)]++)
                    throw ConfigError("labels: entity appears in more than one split");
            }
        };
        check(train_ids, "train");
        check(valid_ids, "valid");
        check(test_ids, "test");
    }
};

// labels file: "entity TAB class" lines; split file: "entity TAB train|valid|test".
// Every labeled entity must carry a split marker.
inline LabelSet load_labels(const std::string& labels_path, const std::string& split_path,
                            const Vocab& vocab) {
    LabelSet ls;
    ls.class_of.assign(static_cast<size_t>(vocab.num_entities()), -1);
    std::unordered_map<std::string, int64_t> class_ids;
    std::vector<int64_t> labeled;
    {
        std::ifstream is(labels_path);
        if (!is) throw ParseError("cannot open labels file " + labels_path);
        std::string line;
        int64_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const size_t tab = line.find('\t');
            if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
                throw ParseError(labels_path + ":" + std::to_string(line_no) +
                                 ": expected 2 tab-separated fields");
            const std::string ent = line.substr(0, tab);
            const std::string cls = line.substr(tab + 1);
            const auto eid = vocab.find_entity(ent);
            if (!eid)
                throw VocabError(labels_path + ":" + std::to_string(line_no) + ": unknown entity '" +
                                 ent + "'");
            auto [it, inserted] = class_ids.try_emplace(cls, static_cast<int64_t>(class_ids.size()));
            ls.class_of[static_cast<size_t>(*eid)] = it->second;
            labeled.push_back(*eid);
        }
    }
    ls.num_classes = static_cast<int64_t>(class_ids.size());
    {
        std::ifstream is(split_path);
        if (!is) throw ParseError("cannot open split file " + split_path);
        std::string line;
        int64_t line_no = 0;
        std::vector<int8_t> marked(ls.class_of.size(), 0);
        while (std::getline(is, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw ParseError(split_path + ":" + std::to_string(line_no) +
                                 ": expected 'entity TAB split'");
            const std::string ent = line.substr(0, tab);
            const std::string split = line.substr(tab + 1);
            const auto eid = vocab.find_entity(ent);
            if (!eid)
                throw VocabError(split_path + ":" + std::to_string(line_no) + ": unknown entity '" +
                                 ent + "'");
            if (ls.class_of[static_cast<size_t>(*eid)] < 0)
                throw ConfigError(split_path + ":" + std::to_string(line_no) + ": entity '" + ent +
                                  "' has no label");
            marked[static_cast<size_t>(*eid)] = 1;
            if (split == "train") ls.train_ids.push_back(*eid);
            else if (split == "valid") ls.valid_ids.push_back(*eid);
            else if (split == "test") ls.test_ids.push_back(*eid);
            else
                throw ParseError(split_path + ":" + std::to_string(line_no) +
                                 ": split must be train, valid, or test");
        }
        for (int64_t id : labeled)
            if (!marked[static_cast<size_t>(id)])
                throw ConfigError("labels: entity '" + vocab.entity_name(id) +
                                  "' is labeled but missing from the split file");
    }
    ls.validate();
    return ls;
}

// Row-softmax class probabilities for all entities, [N_e x C].
inline Var class_probabilities(Tape& t, Var entity_final, Var w_cls) {
    return row_softmax(t, t.matmul(entity_final, w_cls, false, true));
}

// -(1/|split|) sum over labeled entities of ln p[gold class].
inline Var ce_loss(Tape& t, Var probabilities, const LabelSet& labels,
                   std::span<const int64_t> split_ids) {
    if (split_ids.empty()) throw ConfigError("ce_loss: empty split");
    const int64_t C = t.val(probabilities).cols();
    std::vector<int64_t> ids(split_ids.begin(), split_ids.end());
    Var rows = t.gather_rows(probabilities, ids);
    Array onehot(Shape{static_cast<int64_t>(ids.size()), C});
    for (size_t i = 0; i < ids.size(); ++i)
        onehot.at(static_cast<int64_t>(i), labels.class_of[static_cast<size_t>(ids[i])]) = 1.0;
    Var picked = t.elementwise_mul(t.log(rows), t.constant(std::move(onehot)));
    return t.scale(sum_all(t, picked), -1.0 / static_cast<double>(ids.size()));
}

// Argmax match rate over a split; ties resolve to the lowest class id.
inline double accuracy(const Array& probabilities, const LabelSet& labels,
                       std::span<const int64_t> split_ids) {
    if (split_ids.empty()) throw ConfigError("accuracy: empty split");
    int64_t correct = 0;
    for (int64_t id : split_ids) {
        int64_t best = 0;
        for (int64_t c = 1; c < probabilities.cols(); ++c)
            if (probabilities.at(id, c) > probabilities.at(id, best)) best = c;
        if (best == labels.class_of[static_cast<size_t>(id)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split_ids.size());
}

}  // namespace rgat
