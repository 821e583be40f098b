#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rgat/graph.hpp"
#include "rgat/layer.hpp"
#include "rgat/optim.hpp"
#include "rgat/tape.hpp"

namespace rgat {

// A link-prediction query: score (subject, relation, ?) against every entity.
// Subject prediction for (s, r, o) runs as the reverse query (o, r_inv, ?).
struct QueryPair {
    int64_t subject = 0;
    int64_t relation = 0;
    bool operator<(const QueryPair& o) const {
        return subject != o.subject ? subject < o.subject : relation < o.relation;
    }
    bool operator==(const QueryPair&) const = default;
};

// All distinct (subject, query relation) pairs of a training split, forward and
// reverse, each with its full set of observed objects for 1-N targets.
struct QueryBatchIndex {
    std::vector<QueryPair> pairs;
    std::vector<std::vector<int64_t>> positives;  // aligned with pairs, each non-empty

    static QueryBatchIndex build(std::span<const Triplet> triplets, const Vocab& vocab) {
        std::map<QueryPair, std::vector<int64_t>> acc;
        for (const Triplet& t : triplets) {
            acc[{t.subject, t.relation}].push_back(t.object);
            acc[{t.object, vocab.inverse(t.relation)}].push_back(t.subject);
        }
        QueryBatchIndex out;
        for (auto& [pair, objs] : acc) {
            std::sort(objs.begin(), objs.end());
            objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
            out.pairs.push_back(pair);
            out.positives.push_back(std::move(objs));
        }
        return out;
    }

    // Multi-hot label matrix for a batch of pair indices, [B x N_e].
    Array labels_for(std::span<const size_t> batch, int64_t n_entities) const {
        Array y(Shape{static_cast<int64_t>(batch.size()), n_entities});
        for (size_t b = 0; b < batch.size(); ++b)
            for (int64_t o : positives[batch[b]]) y.at(static_cast<int64_t>(b), o) = 1.0;
        return y;
    }
};

enum class ScoreNonlin { relu, elu, identity };

struct QattConfig {
    int64_t query_dim = 0;  // D_q; 0 picks the channel width D_e^(L)/K
    int64_t heads = 1;
    ScoreNonlin sigma2 = ScoreNonlin::relu;
    bool qatt_enabled = true;  // false: beta-free uniform mean over channels
    double label_smoothing = 0.1;

    void validate() const {
        if (heads < 1) throw ConfigError("decoder: heads must be >= 1");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw ConfigError("decoder: label_smoothing must lie in [0, 1)");
    }
};

// Query-aware decoder: attends over the K disentangled channel slices with the
// query relation, builds a query-conditioned embedding, and scores it against
// all entities in one 1-N matrix product.
class QattDecoder {
public:
    QattDecoder(QattConfig cfg, const ModelConfig& model_cfg) : cfg_(cfg) {
        cfg_.validate();
        channels_ = model_cfg.final_channels();
        channel_dim_ = model_cfg.final_channel_dim();
        relation_dim_ = model_cfg.final_relation_dim();
        entity_dim_ = model_cfg.final_entity_dim();
        query_dim_ = cfg_.query_dim > 0 ? cfg_.query_dim : channel_dim_;
        if (cfg_.heads > 1 && query_dim_ % cfg_.heads != 0)
            throw ConfigError("decoder: heads (" + std::to_string(cfg_.heads) +
                              ") must divide query_dim (" + std::to_string(query_dim_) + ")");
    }

    const QattConfig& config() const { return cfg_; }
    int64_t channels() const { return channels_; }
    int64_t query_dim() const { return query_dim_; }

    void init_params(ParamStore& store, Rng& rng) {
        const int64_t head_dim = query_dim_ / cfg_.heads;
        for (int64_t h = 0; h < cfg_.heads; ++h) {
            const std::string base = "qatt.head" + std::to_string(h);
            w1_.push_back(&store.create(base + ".w1", glorot_uniform(head_dim, channel_dim_, rng)));
            w2_.push_back(&store.create(base + ".w2", glorot_uniform(head_dim, relation_dim_, rng)));
        }
        w3_ = &store.create("qatt.w3", glorot_uniform(query_dim_, relation_dim_ + channel_dim_, rng));
        w_out_ = &store.create("qatt.w_out",
                               glorot_uniform(entity_dim_, channels_ * query_dim_, rng));
    }

    // beta [B x K]: per-query channel importances, softmax over K. With several
    // heads, the per-head softmaxes are averaged.
    Var channel_attention(Tape& t, std::span<const Var> subject_channels, Var query_rel) const {
        std::vector<Var> w1, w2;
        for (Param* p : w1_) w1.push_back(t.param(*p));
        for (Param* p : w2_) w2.push_back(t.param(*p));
        return channel_attention_bound(t, subject_channels, query_rel, w1, w2);
    }

    // Q(e_s, r_q) [B x K*D_q]: per channel, beta_k * (W3 [e_s^k || r_q]).
    Var query_embedding(Tape& t, std::span<const Var> subject_channels, Var query_rel,
                        Var beta) const {
        Var w3 = t.param(*w3_);
        std::vector<Var> slices;
        for (int64_t k = 0; k < channels_; ++k) {
            Var cat = t.concat_last_axis({subject_channels[static_cast<size_t>(k)], query_rel});
            Var z = t.matmul(cat, w3, false, true);  // [B x D_q]
            Var beta_col = column_of(t, beta, k, channels_);
            slices.push_back(t.elementwise_mul(beta_col, z));
        }
        return channels_ == 1 ? slices[0] : t.concat_last_axis(slices);
    }

    // scores [B x N_e] = sigma2(W Q) e_o for every entity o.
    Var score_all(Tape& t, Var query_embed, Var entity_matrix) const {
        Var w = t.param(*w_out_);
        Var projected = t.matmul(query_embed, w, false, true);  // [B x D_e]
        switch (cfg_.sigma2) {
            case ScoreNonlin::relu: projected = t.relu(projected); break;
            case ScoreNonlin::elu: projected = t.elu(projected); break;
            case ScoreNonlin::identity: break;
        }
        return t.matmul(projected, entity_matrix, false, true);
    }

    // Full scoring pipeline for a batch of queries against all entities.
    Var score_queries(Tape& t, const EncoderOut& enc, std::span<const QueryPair> batch) const {
        std::vector<int64_t> subj, rel;
        subj.reserve(batch.size());
        rel.reserve(batch.size());
        for (const QueryPair& q : batch) {
            subj.push_back(q.subject);
            rel.push_back(q.relation);
        }
        std::vector<Var> subject_channels;
        for (int64_t k = 0; k < channels_; ++k)
            subject_channels.push_back(
                t.gather_rows(enc.entity_channels[static_cast<size_t>(k)], subj));
        Var query_rel = t.gather_rows(enc.relation, rel);
        Var beta;
        if (cfg_.qatt_enabled) {
            beta = channel_attention(t, subject_channels, query_rel);
        } else {
            beta = t.constant(Array::full(Shape{static_cast<int64_t>(batch.size()), channels_},
                                          1.0 / static_cast<double>(channels_)));
        }
        Var q = query_embedding(t, subject_channels, query_rel, beta);
        return score_all(t, q, enc.entity);
    }

    // beta values only, for inspection reports.
    Array channel_attention_values(Tape& t, const EncoderOut& enc,
                                   std::span<const QueryPair> batch) const {
        std::vector<int64_t> subj, rel;
        for (const QueryPair& q : batch) {
            subj.push_back(q.subject);
            rel.push_back(q.relation);
        }
        std::vector<Var> subject_channels;
        for (int64_t k = 0; k < channels_; ++k)
            subject_channels.push_back(
                t.gather_rows(enc.entity_channels[static_cast<size_t>(k)], subj));
        Var query_rel = t.gather_rows(enc.relation, rel);
        if (!cfg_.qatt_enabled)
            return Array::full(Shape{static_cast<int64_t>(batch.size()), channels_},
                               1.0 / static_cast<double>(channels_));
        return t.val(channel_attention(t, subject_channels, query_rel));
    }

private:
    QattConfig cfg_;
    int64_t channels_ = 1;
    int64_t channel_dim_ = 0;
    int64_t relation_dim_ = 0;
    int64_t entity_dim_ = 0;
    int64_t query_dim_ = 0;
    std::vector<Param*> w1_;  // per head, [D_q/heads x channel_dim]
    std::vector<Param*> w2_;  // per head, [D_q/heads x relation_dim]
    Param* w3_ = nullptr;     // [D_q x (relation_dim + channel_dim)]
    Param* w_out_ = nullptr;  // [D_e x K*D_q]

    Var channel_attention_bound(Tape& t, std::span<const Var> subject_channels, Var query_rel,
                                std::span<const Var> w1, std::span<const Var> w2) const {
        const int64_t head_dim = query_dim_ / cfg_.heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
        Var beta_sum;
        for (int64_t h = 0; h < cfg_.heads; ++h) {
            const auto hi = static_cast<size_t>(h);
            Var rel_proj = t.matmul(query_rel, w2[hi], false, true);  // [B x head_dim]
            std::vector<Var> logit_cols;
            Var ones = t.constant(Array::ones(Shape{head_dim, 1}));
            for (int64_t k = 0; k < channels_; ++k) {
                Var subj_proj =
                    t.matmul(subject_channels[static_cast<size_t>(k)], w1[hi], false, true);
                Var prod = t.elementwise_mul(subj_proj, rel_proj);
                logit_cols.push_back(t.scale(t.matmul(prod, ones), inv_sqrt));  // [B x 1]
            }
            Var logits = channels_ == 1 ? logit_cols[0] : t.concat_last_axis(logit_cols);
            Var beta_h = row_softmax(t, logits);
            beta_sum = h == 0 ? beta_h : t.add(beta_sum, beta_h);
        }
        return cfg_.heads == 1 ? beta_sum : t.scale(beta_sum, 1.0 / static_cast<double>(cfg_.heads));
    }

    // Column k of a [B x K] matrix as [B x 1], extracted with a unit vector.
    static Var column_of(Tape& t, Var m, int64_t k, int64_t width) {
        Array unit(Shape{width, 1});
        unit[k] = 1.0;
        return t.matmul(m, t.constant(std::move(unit)));
    }
};

// Mean binary cross-entropy over every (query, candidate) cell:
//   mean of -[t log p + (1-t) log(1-p)],  p = sigmoid(score),
// with optional label smoothing t' = (1-eps) t + eps / N_e. log() is clamped,
// so saturated cells stay finite.
inline Var bce_loss(Tape& t, Var scores, const Array& labels, double smoothing) {
    const Shape score_shape = t.val(scores).shape;  // copied: val refs don't survive pushes
    if (score_shape != labels.shape)
        throw ShapeError("bce_loss: scores " + shape_str(score_shape) + " vs labels " +
                         shape_str(labels.shape));
    const int64_t n_entities = labels.cols();
    Array pos = labels;
    if (smoothing > 0.0) {
        const double eps = smoothing;
        for (double& v : pos.data)
            v = (1.0 - eps) * v + eps / static_cast<double>(n_entities);
    }
    Array neg(pos.shape);
    for (int64_t i = 0; i < pos.numel(); ++i) neg[i] = 1.0 - pos[i];
    Var p = t.sigmoid(scores);
    Var log_p = t.log(p);
    Var one_minus_p = t.add(t.scale(p, -1.0), t.constant(Array::ones(score_shape)));
    Var log_1mp = t.log(one_minus_p);
    Var term = t.add(t.elementwise_mul(t.constant(std::move(pos)), log_p),
                     t.elementwise_mul(t.constant(std::move(neg)), log_1mp));
    return t.scale(sum_all(t, term), -1.0 / static_cast<double>(shape_numel(score_shape)));
}

}  // namespace rgat
