#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rgat/core.hpp"
#include "rgat/graph.hpp"

namespace rgat {

// Planted-aspect knowledge graph. Every entity carries one latent group per
// aspect; every relation belongs to exactly one aspect and links groups of that
// aspect through a fixed permutation. Relations of the same aspect therefore
// share a latent dimension, which is the structure multi-channel attention is
// meant to pick up.
struct SynthSpec {
    int64_t aspects = 2;
    int64_t relations_per_aspect = 2;
    int64_t entities = 60;
    int64_t groups = 4;    // latent groups per aspect; also the class count C
    double density = 0.1;  // fraction of group-compatible pairs realized as edges
    uint64_t seed = 1;
    double label_train_fraction = 0.6;
    double label_valid_fraction = 0.2;

    void validate() const {
        if (aspects < 1 || relations_per_aspect < 1 || entities < 2 || groups < 2)
            throw ConfigError("synth: aspects, relations, entities, groups must be positive");
        if (groups > entities) throw ConfigError("synth: more groups than entities");
        if (density <= 0.0 || density > 1.0)
            throw ConfigError("synth: density must lie in (0, 1]");
    }
};

struct SynthData {
    SynthSpec spec;
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::vector<int64_t> relation_aspect;          // per relation id
    std::vector<std::vector<int64_t>> attributes;  // [aspect][entity] -> group
    std::vector<Triplet> train, valid, test;
    // entity classification labels: class = aspect-0 group
    std::vector<int64_t> label_train, label_valid, label_test;

    int64_t class_of(int64_t entity) const { return attributes[0][static_cast<size_t>(entity)]; }
};

inline SynthData generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    SynthData d;
    d.spec = spec;
    Rng rng(spec.seed);

    for (int64_t v = 0; v < spec.entities; ++v) d.entity_names.push_back("e" + std::to_string(v));

    // latent groups; every group is guaranteed non-empty in every aspect
    d.attributes.assign(static_cast<size_t>(spec.aspects), {});
    for (int64_t a = 0; a < spec.aspects; ++a) {
        auto& attr = d.attributes[static_cast<size_t>(a)];
        attr.resize(static_cast<size_t>(spec.entities));
        for (int64_t v = 0; v < spec.entities; ++v)
            attr[static_cast<size_t>(v)] = v < spec.groups ? v : rng.below(spec.groups);
    }

    std::vector<Triplet> all;
    for (int64_t a = 0; a < spec.aspects; ++a) {
        for (int64_t j = 0; j < spec.relations_per_aspect; ++j) {
            const int64_t rel = static_cast<int64_t>(d.relation_names.size());
            d.relation_names.push_back("a" + std::to_string(a) + "_r" + std::to_string(j));
            d.relation_aspect.push_back(a);

            // group permutation for this relation
            std::vector<int64_t> pi(static_cast<size_t>(spec.groups));
            for (int64_t g = 0; g < spec.groups; ++g) pi[static_cast<size_t>(g)] = g;
            rng.shuffle(pi);

            // all compatible ordered pairs under this relation's permutation
            const auto& attr = d.attributes[static_cast<size_t>(a)];
            std::vector<std::pair<int64_t, int64_t>> candidates;
            for (int64_t u = 0; u < spec.entities; ++u)
                for (int64_t v = 0; v < spec.entities; ++v)
                    if (u != v &&
                        attr[static_cast<size_t>(v)] == pi[static_cast<size_t>(attr[static_cast<size_t>(u)])])
                        candidates.emplace_back(u, v);
            const auto n_edges =
                static_cast<int64_t>(spec.density * static_cast<double>(candidates.size()) + 0.5);
            if (n_edges < 1 || candidates.empty())
                throw ConfigError("synth: infeasible density " + fmt_double(spec.density) +
                                  " for relation " + d.relation_names.back() + " (" +
                                  std::to_string(candidates.size()) + " candidate pairs)");
            rng.shuffle(candidates);
            for (int64_t i = 0; i < n_edges; ++i)
                all.push_back({candidates[static_cast<size_t>(i)].first, rel,
                               candidates[static_cast<size_t>(i)].second});
        }
    }

    // 80/10/10 split with a transductive guarantee: the first triplet covering
    // any entity or relation goes to train, so valid/test never introduce names.
    rng.shuffle(all);
    std::vector<int8_t> entity_covered(static_cast<size_t>(spec.entities), 0);
    std::vector<int8_t> relation_covered(d.relation_names.size(), 0);
    std::vector<Triplet> deferred;
    for (const Triplet& t : all) {
        if (!entity_covered[static_cast<size_t>(t.subject)] ||
            !entity_covered[static_cast<size_t>(t.object)] ||
            !relation_covered[static_cast<size_t>(t.relation)]) {
            d.train.push_back(t);
            entity_covered[static_cast<size_t>(t.subject)] = 1;
            entity_covered[static_cast<size_t>(t.object)] = 1;
            relation_covered[static_cast<size_t>(t.relation)] = 1;
        } else {
            deferred.push_back(t);
        }
    }
    const auto target_train = static_cast<size_t>(0.8 * static_cast<double>(all.size()) + 0.5);
    size_t i = 0;
    while (d.train.size() < target_train && i < deferred.size()) d.train.push_back(deferred[i++]);
    const size_t remaining = deferred.size() - i;
    const size_t n_valid = remaining / 2;
    for (size_t j = 0; j < remaining; ++j)
        (j < n_valid ? d.valid : d.test).push_back(deferred[i + j]);

    // label splits over all entities
    std::vector<int64_t> ids(static_cast<size_t>(spec.entities));
    for (int64_t v = 0; v < spec.entities; ++v) ids[static_cast<size_t>(v)] = v;
    rng.shuffle(ids);
    const auto n_tr = static_cast<size_t>(spec.label_train_fraction * static_cast<double>(ids.size()));
    const auto n_va = static_cast<size_t>(spec.label_valid_fraction * static_cast<double>(ids.size()));
    for (size_t j = 0; j < ids.size(); ++j) {
        if (j < n_tr) d.label_train.push_back(ids[j]);
        else if (j < n_tr + n_va) d.label_valid.push_back(ids[j]);
        else d.label_test.push_back(ids[j]);
    }
    return d;
}

// Writes the split files plus the aspect map, labels, and label split markers.
inline void write_synthetic(const SynthData& d, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto write_split = [&](const std::vector<Triplet>& split, const std::string& name) {
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        if (!os) throw Error("synth: cannot write " + name + " under " + dir);
        for (const Triplet& t : split)
            os << d.entity_names[static_cast<size_t>(t.subject)] << '\t'
               << d.relation_names[static_cast<size_t>(t.relation)] << '\t'
               << d.entity_names[static_cast<size_t>(t.object)] << '\n';
    };
    write_split(d.train, "train.txt");
    write_split(d.valid, "valid.txt");
    write_split(d.test, "test.txt");
    {
        std::ofstream os(fs::path(dir) / "aspects.tsv", std::ios::binary);
        for (size_t r = 0; r < d.relation_names.size(); ++r)
            os << d.relation_names[r] << '\t' << d.relation_aspect[r] << '\n';
    }
    {
        std::ofstream os(fs::path(dir) / "labels.tsv", std::ios::binary);
        for (size_t v = 0; v < d.entity_names.size(); ++v)
            os << d.entity_names[v] << "\tc" << d.class_of(static_cast<int64_t>(v)) << '\n';
    }
    {
        std::ofstream os(fs::path(dir) / "label_split.tsv", std::ios::binary);
        for (int64_t v : d.label_train) os << d.entity_names[static_cast<size_t>(v)] << "\ttrain\n";
        for (int64_t v : d.label_valid) os << d.entity_names[static_cast<size_t>(v)] << "\tvalid\n";
        for (int64_t v : d.label_test) os << d.entity_names[static_cast<size_t>(v)] << "\ttest\n";
    }
}

// relation name -> aspect id, as written by write_synthetic.
inline std::unordered_map<std::string, int64_t> load_aspect_map(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open aspect map " + path);
    std::unordered_map<std::string, int64_t> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'relation TAB aspect'");
        out[line.substr(0, tab)] = std::stoll(line.substr(tab + 1));
    }
    return out;
}

}  // namespace rgat
