#pragma once

#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rgat/core.hpp"

namespace rgat {

struct Triplet {
    int64_t subject = 0;
    int64_t relation = 0;
    int64_t object = 0;
    bool operator==(const Triplet&) const = default;
};

// Entity and relation name tables. Relations come in three bands after
// augmentation: originals [0, |R|), inverses [|R|, 2|R|), and the shared
// self-loop relation at id 2|R|.
class Vocab {
public:
    static constexpr const char* kInverseSuffix = "_inv";
    static constexpr const char* kSelfLoopName = "_self_loop";

    bool empty() const { return entity_names_.empty() && relation_names_.empty(); }
    bool augmented() const { return n_base_relations_ >= 0; }

    int64_t num_entities() const { return static_cast<int64_t>(entity_names_.size()); }
    int64_t num_base_relations() const {
        return augmented() ? n_base_relations_ : static_cast<int64_t>(relation_names_.size());
    }
    int64_t num_relations_aug() const {
        if (!augmented()) throw VocabError("vocab: not augmented yet");
        return 2 * n_base_relations_ + 1;
    }
    int64_t self_loop_id() const {
        if (!augmented()) throw VocabError("vocab: not augmented yet");
        return 2 * n_base_relations_;
    }

    // Inverse pairing per the graph augmentation: r < |R| maps to r + |R| and
    // back. The self-loop has no inverse.
    int64_t inverse(int64_t rel) const {
        const int64_t base = num_base_relations();
        if (rel < 0 || rel >= 2 * base)
            throw VocabError("vocab: relation " + std::to_string(rel) + " has no inverse");
        return rel < base ? rel + base : rel - base;
    }

    int64_t add_entity(const std::string& name) {
        auto it = entity_ids_.find(name);
        if (it != entity_ids_.end()) return it->second;
        entity_names_.push_back(name);
        return entity_ids_[name] = static_cast<int64_t>(entity_names_.size()) - 1;
    }

    int64_t add_relation(const std::string& name) {
        if (augmented()) throw VocabError("vocab: cannot add relations after augmentation");
        auto it = relation_ids_.find(name);
        if (it != relation_ids_.end()) return it->second;
        relation_names_.push_back(name);
        return relation_ids_[name] = static_cast<int64_t>(relation_names_.size()) - 1;
    }

    std::optional<int64_t> find_entity(const std::string& name) const {
        auto it = entity_ids_.find(name);
        if (it == entity_ids_.end()) return std::nullopt;
        return it->second;
    }
    std::optional<int64_t> find_relation(const std::string& name) const {
        auto it = relation_ids_.find(name);
        if (it == relation_ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& entity_name(int64_t id) const { return entity_names_.at(static_cast<size_t>(id)); }
    const std::string& relation_name(int64_t id) const { return relation_names_.at(static_cast<size_t>(id)); }

    // Appends inverse names and the self-loop name so every relation id in
    // [0, 2|R|+1) resolves. Synthesized names must not collide with dataset ones.
    void augment_relations() {
        if (augmented()) return;
        n_base_relations_ = static_cast<int64_t>(relation_names_.size());
        for (int64_t r = 0; r < n_base_relations_; ++r) {
            const std::string inv = relation_names_[static_cast<size_t>(r)] + kInverseSuffix;
            if (relation_ids_.count(inv))
                throw VocabError("vocab: synthesized inverse name collides with dataset relation '" +
                                 inv + "'");
            relation_names_.push_back(inv);
            relation_ids_[inv] = static_cast<int64_t>(relation_names_.size()) - 1;
        }
        if (relation_ids_.count(kSelfLoopName))
            throw VocabError(std::string("vocab: dataset relation collides with self-loop name '") +
                             kSelfLoopName + "'");
        relation_names_.push_back(kSelfLoopName);
        relation_ids_[kSelfLoopName] = static_cast<int64_t>(relation_names_.size()) - 1;
    }

    // Debug dump, "id TAB name" per line.
    void dump_entities(std::ostream& os) const {
        for (size_t i = 0; i < entity_names_.size(); ++i) os << i << '\t' << entity_names_[i] << '\n';
    }
    void dump_relations(std::ostream& os) const {
        for (size_t i = 0; i < relation_names_.size(); ++i) os << i << '\t' << relation_names_[i] << '\n';
    }

private:
    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, int64_t> entity_ids_;
    std::unordered_map<std::string, int64_t> relation_ids_;
    int64_t n_base_relations_ = -1;
};

// Parses "subject TAB relation TAB object" lines. An empty vocab is extended
// (training split); a populated one is read-only and unknown names are errors,
// which is what the transductive setting demands of valid/test splits.
inline std::vector<Triplet> load_triplets(const std::string& path, Vocab& vocab) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open triplet file " + path);
    const bool building = vocab.empty();
    std::vector<Triplet> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        const size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 3 tab-separated fields");
        const std::string s = line.substr(0, t1);
        const std::string r = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string o = line.substr(t2 + 1);
        if (s.empty() || r.empty() || o.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty field");
        Triplet t;
        if (building) {
            t.subject = vocab.add_entity(s);
            t.relation = vocab.add_relation(r);
            t.object = vocab.add_entity(o);
        } else {
            const auto si = vocab.find_entity(s);
            const auto ri = vocab.find_relation(r);
            const auto oi = vocab.find_entity(o);
            if (!si) throw VocabError(path + ":" + std::to_string(line_no) + ": unknown entity '" + s + "'");
            if (!oi) throw VocabError(path + ":" + std::to_string(line_no) + ": unknown entity '" + o + "'");
            if (!ri || *ri >= vocab.num_base_relations())
                throw VocabError(path + ":" + std::to_string(line_no) + ": unknown relation '" + r + "'");
            t = {*si, *ri, *oi};
        }
        out.push_back(t);
    }
    return out;
}

// The augmented multi-relational graph: per-entity incoming edge lists holding
// forward edges, synthesized inverse edges, and one self-loop per entity, plus
// flat per-edge arrays grouped by target entity for vectorized aggregation.
struct MultiRelGraph {
    // incoming[v]: (neighbor u, relation i) in insertion order:
    // forward edges first, then inverse edges, then the self-loop.
    std::vector<std::vector<std::pair<int64_t, int64_t>>> incoming;
    int64_t edge_count = 0;
    int64_t n_relations_aug = 0;

    // Flattened edges in (target asc, list order); edge e points u --i--> v.
    std::vector<int64_t> edge_target;
    std::vector<int64_t> edge_source;
    std::vector<int64_t> edge_relation;
    std::vector<int64_t> offsets;  // per-target ranges into the flat arrays, size N_e+1

    int64_t num_entities() const { return static_cast<int64_t>(incoming.size()); }

    std::span<const std::pair<int64_t, int64_t>> neighbors(int64_t v) const {
        return incoming.at(static_cast<size_t>(v));
    }

    void build_flat() {
        edge_target.clear();
        edge_source.clear();
        edge_relation.clear();
        offsets.assign(1, 0);
        for (int64_t v = 0; v < num_entities(); ++v) {
            for (const auto& [u, rel] : incoming[static_cast<size_t>(v)]) {
                edge_target.push_back(v);
                edge_source.push_back(u);
                edge_relation.push_back(rel);
            }
            offsets.push_back(static_cast<int64_t>(edge_target.size()));
        }
        edge_count = static_cast<int64_t>(edge_target.size());
    }

    // Test/inspection hook: build directly from explicit incoming lists.
    static MultiRelGraph from_incoming(std::vector<std::vector<std::pair<int64_t, int64_t>>> lists,
                                       int64_t n_relations_aug) {
        MultiRelGraph g;
        g.incoming = std::move(lists);
        g.n_relations_aug = n_relations_aug;
        g.build_flat();
        return g;
    }
};

inline MultiRelGraph build_graph(std::span<const Triplet> triplets, const Vocab& vocab) {
    if (!vocab.augmented()) throw VocabError("build_graph: vocab must be augmented first");
    const int64_t n = vocab.num_entities();
    const int64_t base = vocab.num_base_relations();
    MultiRelGraph g;
    g.n_relations_aug = vocab.num_relations_aug();
    g.incoming.resize(static_cast<size_t>(n));
    for (const Triplet& t : triplets)
        g.incoming[static_cast<size_t>(t.object)].emplace_back(t.subject, t.relation);
    for (const Triplet& t : triplets)
        g.incoming[static_cast<size_t>(t.subject)].emplace_back(t.object, t.relation + base);
    const int64_t self_loop = vocab.self_loop_id();
    for (int64_t v = 0; v < n; ++v) g.incoming[static_cast<size_t>(v)].emplace_back(v, self_loop);
    g.build_flat();
    return g;
}

}  // namespace rgat
