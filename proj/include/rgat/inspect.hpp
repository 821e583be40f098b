#pragma once

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rgat/decoder.hpp"
#include "rgat/eval.hpp"
#include "rgat/layer.hpp"

namespace rgat {

// ---- channel attention summary -----------------------------------------------------
//
// For each query relation, the mean of the decoder's channel attention over a
// seeded sample of subject entities: one row per relation, one column per
// channel. Figures are produced externally from the emitted matrix.

struct ChannelAttentionReport {
    std::vector<std::string> relations;
    int64_t channels = 0;
    std::vector<std::vector<double>> mean_beta;  // [relation][channel]
    int64_t sample_size = 0;
    uint64_t seed = 0;

    void check() const {
        for (const auto& row : mean_beta) {
            double s = 0.0;
            for (double v : row) {
                if (v < 0.0) throw NumericError("channel attention: negative mean beta");
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw NumericError("channel attention: mean beta row sums to " + fmt_double(s));
        }
    }

    int64_t argmax_channel(size_t relation_row) const {
        const auto& row = mean_beta.at(relation_row);
        return static_cast<int64_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }

    std::string text() const {
        std::ostringstream os;
        size_t width = 10;
        for (const auto& r : relations) width = std::max(width, r.size() + 2);
        os << std::left << std::setw(static_cast<int>(width)) << "relation";
        for (int64_t k = 0; k < channels; ++k) os << std::right << std::setw(10) << ("ch" + std::to_string(k));
        os << "\n";
        os << std::fixed << std::setprecision(4);
        for (size_t i = 0; i < relations.size(); ++i) {
            os << std::left << std::setw(static_cast<int>(width)) << relations[i];
            for (double v : mean_beta[i]) os << std::right << std::setw(10) << v;
            os << "\n";
        }
        return os.str();
    }

    std::string machine_lines() const {
        std::ostringstream os;
        os << std::setprecision(12);
        for (size_t i = 0; i < relations.size(); ++i)
            for (int64_t k = 0; k < channels; ++k)
                os << "beta\t" << relations[i] << "\t" << k << "\t" << mean_beta[i][static_cast<size_t>(k)]
                   << "\n";
        return os.str();
    }
};

inline ChannelAttentionReport channel_attention_summary(
    const RgatModel& model, const QattDecoder& decoder, const MultiRelGraph& graph,
    const Vocab& vocab, const std::vector<std::string>& relation_names, int64_t sample_size,
    uint64_t seed) {
    ChannelAttentionReport rep;
    rep.channels = decoder.channels();
    rep.seed = seed;

    std::vector<int64_t> relation_ids;
    for (const auto& name : relation_names) {
        const auto id = vocab.find_relation(name);
        if (!id) throw VocabError("inspect: unknown relation '" + name + "'");
        relation_ids.push_back(*id);
        rep.relations.push_back(name);
    }

    Rng rng(seed);
    std::vector<int64_t> sample =
        rng.sample_without_replacement(graph.num_entities(), sample_size);
    rep.sample_size = static_cast<int64_t>(sample.size());

    EncoderSnapshot snap;
    {
        Tape t;
        snap = EncoderSnapshot::take(t, model.forward(t, graph, {}));
    }
    for (int64_t rel : relation_ids) {
        std::vector<QueryPair> batch;
        for (int64_t s : sample) batch.push_back({s, rel});
        Tape t;
        EncoderOut enc = snap.mount(t);
        const Array beta = decoder.channel_attention_values(t, enc, batch);
        std::vector<double> mean(static_cast<size_t>(rep.channels), 0.0);
        for (int64_t b = 0; b < beta.rows(); ++b)
            for (int64_t k = 0; k < rep.channels; ++k)
                mean[static_cast<size_t>(k)] += beta.at(b, k);
        for (double& v : mean) v /= static_cast<double>(beta.rows());
        rep.mean_beta.push_back(std::move(mean));
    }
    rep.check();
    return rep;
}

// ---- per-query fact attribution ------------------------------------------------------
//
// Mirrors the case-study table: the top channels by beta for one (subject,
// query relation), and within each channel the subject's incoming facts ranked
// by final-layer attention weight.

struct FactAttributionReport {
    struct Fact {
        std::string subject;
        std::string relation;
        std::string neighbor;
        double alpha = 0.0;
    };
    struct Channel {
        int64_t channel = 0;
        double beta = 0.0;
        std::vector<Fact> facts;
    };

    std::string subject;
    std::string query_relation;
    std::vector<Channel> channels;  // beta descending

    void check() const {
        double total = 0.0;
        double prev = 1.0;
        for (const auto& c : channels) {
            if (c.beta > prev + 1e-12) throw NumericError("fact report: channels not sorted by beta");
            prev = c.beta;
            total += c.beta;
            double alpha_sum = 0.0;
            for (const auto& f : c.facts) alpha_sum += f.alpha;
            if (alpha_sum > 1.0 + 1e-9)
                throw NumericError("fact report: listed alpha weights exceed a distribution");
        }
        if (total > 1.0 + 1e-9) throw NumericError("fact report: beta values exceed 1");
    }

    std::string text() const {
        std::ostringstream os;
        os << "subject: " << subject << "\nquery relation: " << query_relation << "\n";
        os << std::fixed << std::setprecision(3);
        for (const auto& c : channels) {
            os << "channel " << c.channel << ": " << c.beta << "\n";
            for (const auto& f : c.facts)
                os << "  (" << f.subject << ", " << f.relation << ", " << f.neighbor
                   << ") : " << f.alpha << "\n";
        }
        return os.str();
    }
};

inline FactAttributionReport top_facts(const RgatModel& model, const QattDecoder& decoder,
                                       const MultiRelGraph& graph, const Vocab& vocab,
                                       const std::string& subject_name,
                                       const std::string& relation_name, int64_t top_channels,
                                       int64_t top_facts_per_channel) {
    const auto subject = vocab.find_entity(subject_name);
    if (!subject) throw VocabError("inspect: unknown entity '" + subject_name + "'");
    const auto relation = vocab.find_relation(relation_name);
    if (!relation) throw VocabError("inspect: unknown relation '" + relation_name + "'");

    FactAttributionReport rep;
    rep.subject = subject_name;
    rep.query_relation = relation_name;

    EncoderSnapshot snap;
    {
        Tape t;
        snap = EncoderSnapshot::take(t, model.forward(t, graph, {}));
    }
    Array beta;
    {
        Tape t;
        EncoderOut enc = snap.mount(t);
        const std::vector<QueryPair> batch{{*subject, *relation}};
        beta = decoder.channel_attention_values(t, enc, batch);
    }

    std::vector<int64_t> channel_order(static_cast<size_t>(decoder.channels()));
    for (size_t k = 0; k < channel_order.size(); ++k) channel_order[k] = static_cast<int64_t>(k);
    std::sort(channel_order.begin(), channel_order.end(), [&](int64_t a, int64_t b) {
        return beta[a] != beta[b] ? beta[a] > beta[b] : a < b;
    });

    const int64_t begin = graph.offsets[static_cast<size_t>(*subject)];
    const int64_t end = graph.offsets[static_cast<size_t>(*subject) + 1];
    for (int64_t c = 0; c < std::min<int64_t>(top_channels, decoder.channels()); ++c) {
        const int64_t k = channel_order[static_cast<size_t>(c)];
        FactAttributionReport::Channel ch;
        ch.channel = k;
        ch.beta = beta[k];
        const Array& alpha = snap.final_alpha[static_cast<size_t>(k)];
        std::vector<int64_t> edges;
        for (int64_t e = begin; e < end; ++e) edges.push_back(e);
        std::sort(edges.begin(), edges.end(), [&](int64_t a, int64_t b) {
            return alpha[a] != alpha[b] ? alpha[a] > alpha[b] : a < b;
        });
        for (int64_t i = 0; i < std::min<int64_t>(top_facts_per_channel,
                                                  static_cast<int64_t>(edges.size()));
             ++i) {
            const int64_t e = edges[static_cast<size_t>(i)];
            FactAttributionReport::Fact f;
            f.subject = subject_name;
            f.relation = vocab.relation_name(graph.edge_relation[static_cast<size_t>(e)]);
            f.neighbor = vocab.entity_name(graph.edge_source[static_cast<size_t>(e)]);
            f.alpha = alpha[e];
            ch.facts.push_back(std::move(f));
        }
        rep.channels.push_back(std::move(ch));
    }
    rep.check();
    return rep;
}

// ---- aspect alignment ------------------------------------------------------------------
//
// Quantifies disentanglement on planted-aspect data: per aspect, the fraction
// of its relations whose argmax mean-beta channel equals the aspect's modal
// channel, averaged over aspects. 1.0 means every aspect routes through a
// single dedicated channel.

inline double aspect_alignment_score(const ChannelAttentionReport& report,
                                     const std::unordered_map<std::string, int64_t>& relation_aspect) {
    if (report.channels == 1) return 1.0;  // degenerate: a single channel always aligns
    std::unordered_map<int64_t, std::vector<int64_t>> argmax_by_aspect;
    for (size_t i = 0; i < report.relations.size(); ++i) {
        auto it = relation_aspect.find(report.relations[i]);
        if (it == relation_aspect.end())
            throw VocabError("alignment: relation '" + report.relations[i] + "' has no aspect");
        argmax_by_aspect[it->second].push_back(report.argmax_channel(i));
    }
    double score = 0.0;
    for (const auto& [aspect, argmaxes] : argmax_by_aspect) {
        std::unordered_map<int64_t, int64_t> counts;
        for (int64_t a : argmaxes) ++counts[a];
        int64_t modal_count = 0;
        int64_t modal_channel = std::numeric_limits<int64_t>::max();
        for (const auto& [ch, n] : counts)
            if (n > modal_count || (n == modal_count && ch < modal_channel)) {
                modal_count = n;
                modal_channel = ch;
            }
        score += static_cast<double>(modal_count) / static_cast<double>(argmaxes.size());
    }
    return score / static_cast<double>(argmax_by_aspect.size());
}

// Monte-Carlo chance level of the alignment score under uniformly random argmax
// channels, for the same aspect sizes.
inline double alignment_chance_baseline(int64_t channels,
                                        const std::vector<int64_t>& aspect_sizes, int64_t trials,
                                        uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    for (int64_t t = 0; t < trials; ++t) {
        double score = 0.0;
        for (int64_t size : aspect_sizes) {
            std::unordered_map<int64_t, int64_t> counts;
            for (int64_t i = 0; i < size; ++i) ++counts[rng.below(channels)];
            int64_t modal = 0;
            for (const auto& [_, n] : counts) modal = std::max(modal, n);
            score += static_cast<double>(modal) / static_cast<double>(size);
        }
        total += score / static_cast<double>(aspect_sizes.size());
    }
    return total / static_cast<double>(trials);
}

}  // namespace rgat
