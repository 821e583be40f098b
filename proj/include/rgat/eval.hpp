#pragma once

#include <functional>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rgat/decoder.hpp"
#include "rgat/graph.hpp"

namespace rgat {

// For each (subject, relation) query, forward and reverse, the set of objects
// known true across train, valid, and test. Ranking removes these from
// contention, except the query's own gold.
class FilterIndex {
public:
    static FilterIndex build(std::span<const Triplet> train, std::span<const Triplet> valid,
                             std::span<const Triplet> test, const Vocab& vocab) {
        FilterIndex f;
        auto feed = [&](std::span<const Triplet> split) {
            for (const Triplet& t : split) {
                f.sets_[key(t.subject, t.relation)].insert(t.object);
                f.sets_[key(t.object, vocab.inverse(t.relation))].insert(t.subject);
            }
        };
        feed(train);
        feed(valid);
        feed(test);
        return f;
    }

    const std::unordered_set<int64_t>* find(int64_t subject, int64_t relation) const {
        auto it = sets_.find(key(subject, relation));
        return it == sets_.end() ? nullptr : &it->second;
    }

    bool contains(int64_t subject, int64_t relation, int64_t object) const {
        const auto* s = find(subject, relation);
        return s != nullptr && s->count(object) > 0;
    }

    size_t num_keys() const { return sets_.size(); }
    size_t total_entries() const {
        size_t n = 0;
        for (const auto& [_, s] : sets_) n += s.size();
        return n;
    }

private:
    static uint64_t key(int64_t subject, int64_t relation) {
        return (static_cast<uint64_t>(subject) << 24) ^ static_cast<uint64_t>(relation);
    }
    std::unordered_map<uint64_t, std::unordered_set<int64_t>> sets_;
};

// ---- RANDOM tie protocol ------------------------------------------------------
//
// Candidates with a score strictly above the gold's count against it; candidates
// with exactly the gold's score are ordered by a seeded random permutation. The
// permutation is realized as one u64 key per entity, drawn in entity-id order
// from splitmix64(seed), so a counting implementation and a full-sort oracle
// agree rank-for-rank on the same seed.
inline std::vector<uint64_t> tie_break_keys(int64_t n_entities, uint64_t seed) {
    std::vector<uint64_t> keys(static_cast<size_t>(n_entities));
    uint64_t state = seed;
    for (auto& k : keys) k = splitmix64_next(state);
    return keys;
}

// Filtered rank of `gold` within `scores` under the RANDOM protocol. Entities in
// `filter` other than gold leave the candidate set entirely.
inline int64_t filtered_rank(std::span<const double> scores, int64_t gold,
                             const std::unordered_set<int64_t>* filter, uint64_t seed) {
    const int64_t n = static_cast<int64_t>(scores.size());
    if (gold < 0 || gold >= n)
        throw Error("filtered_rank: gold entity " + std::to_string(gold) + " outside score vector");
    const std::vector<uint64_t> keys = tie_break_keys(n, seed);
    const double gold_score = scores[static_cast<size_t>(gold)];
    const uint64_t gold_key = keys[static_cast<size_t>(gold)];
    int64_t rank = 1;
    for (int64_t c = 0; c < n; ++c) {
        if (c == gold) continue;
        if (filter != nullptr && filter->count(c)) continue;
        const double sc = scores[static_cast<size_t>(c)];
        if (sc > gold_score || (sc == gold_score && keys[static_cast<size_t>(c)] < gold_key)) ++rank;
    }
    return rank;
}

struct RankReport {
    std::vector<int64_t> ranks;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;

    int64_t num_queries() const { return static_cast<int64_t>(ranks.size()); }

    void finalize() {
        mrr = hits1 = hits3 = hits10 = 0.0;
        if (ranks.empty()) return;
        for (int64_t r : ranks) {
            mrr += 1.0 / static_cast<double>(r);
            hits1 += r <= 1;
            hits3 += r <= 3;
            hits10 += r <= 10;
        }
        const double n = static_cast<double>(ranks.size());
        mrr /= n;
        hits1 /= n;
        hits3 /= n;
        hits10 /= n;
    }

    std::string table() const {
        std::ostringstream os;
        os << std::left << std::setw(10) << "metric" << "value\n";
        os << std::left << std::setw(10) << "queries" << num_queries() << "\n";
        os << std::fixed << std::setprecision(6);
        os << std::left << std::setw(10) << "MRR" << mrr << "\n";
        os << std::left << std::setw(10) << "Hits@1" << hits1 << "\n";
        os << std::left << std::setw(10) << "Hits@3" << hits3 << "\n";
        os << std::left << std::setw(10) << "Hits@10" << hits10 << "\n";
        return os.str();
    }

    std::string machine_lines() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(6);
        os << "mrr=" << mrr << "\n"
           << "hits1=" << hits1 << "\n"
           << "hits3=" << hits3 << "\n"
           << "hits10=" << hits10 << "\n";
        return os.str();
    }
};

// Scores a batch of queries against all entities; rows align with the batch.
using ScoreFn = std::function<Array(std::span<const QueryPair>)>;

// Protocol-exact evaluation of a triplet split: each triplet contributes an
// object query (s, r, ?) and a subject query (o, r_inv, ?). Each query's
// tie-break seed derives from (seed, triplet index, direction), so reports are
// reproducible and independent of batching.
inline RankReport evaluate(const ScoreFn& score_fn, std::span<const Triplet> split,
                           const FilterIndex& filter, const Vocab& vocab, uint64_t seed,
                           size_t batch_size = 128) {
    if (split.empty()) throw Error("evaluate: empty split");
    struct Query {
        QueryPair pair;
        int64_t gold;
        uint64_t tie_seed;
    };
    std::vector<Query> queries;
    queries.reserve(2 * split.size());
    for (size_t i = 0; i < split.size(); ++i) {
        const Triplet& t = split[i];
        queries.push_back({{t.subject, t.relation}, t.object, mix_seed(seed, 2 * i)});
        queries.push_back(
            {{t.object, vocab.inverse(t.relation)}, t.subject, mix_seed(seed, 2 * i + 1)});
    }
    RankReport report;
    report.ranks.reserve(queries.size());
    for (size_t start = 0; start < queries.size(); start += batch_size) {
        const size_t stop = std::min(queries.size(), start + batch_size);
        std::vector<QueryPair> batch;
        for (size_t i = start; i < stop; ++i) batch.push_back(queries[i].pair);
        const Array scores = score_fn(batch);
        if (scores.rows() != static_cast<int64_t>(batch.size()))
            throw ShapeError("evaluate: scorer returned " + shape_str(scores.shape) + " for " +
                             std::to_string(batch.size()) + " queries");
        for (size_t i = start; i < stop; ++i) {
            const Query& q = queries[i];
            std::span<const double> row(&scores.data[(i - start) * static_cast<size_t>(scores.cols())],
                                        static_cast<size_t>(scores.cols()));
            report.ranks.push_back(
                filtered_rank(row, q.gold, filter.find(q.pair.subject, q.pair.relation), q.tie_seed));
        }
    }
    report.finalize();
    return report;
}

// Convenience: a ScoreFn backed by a trained encoder + decoder in eval mode.
// The encoder runs once; batches are scored against the frozen snapshot.
inline ScoreFn model_score_fn(const RgatModel& model, const QattDecoder& decoder,
                              const MultiRelGraph& graph) {
    EncoderSnapshot snap;
    {
        Tape t;
        snap = EncoderSnapshot::take(t, model.forward(t, graph, {}));
    }
    return [snap = std::move(snap), &decoder](std::span<const QueryPair> batch) {
        Tape t;
        EncoderOut enc = snap.mount(t);
        return t.val(decoder.score_queries(t, enc, batch));
    };
}

}  // namespace rgat
