#pragma once

#include <span>
#include <string>
#include <vector>

#include "rgat/graph.hpp"
#include "rgat/optim.hpp"
#include "rgat/tape.hpp"

namespace rgat {

enum class Nonlin { elu, relu };

inline Var apply_nonlin(Tape& t, Var x, Nonlin n) {
    return n == Nonlin::elu ? t.elu(x) : t.relu(x);
}

// One relational attention layer: K channels projecting entities and relations
// into K subspaces, per-channel edge attention, relation-gated aggregation, and
// channel concatenation. Channel width is out_dim / channels.
struct LayerConfig {
    int64_t channels = 1;  // K
    int64_t in_entity_dim = 0;
    int64_t in_relation_dim = 0;
    int64_t out_dim = 0;
    double leaky_slope = 0.2;              // attention nonlinearity
    Nonlin aggregate_nonlin = Nonlin::elu;  // sigma1
    double attention_dropout = 0.1;
    double feature_dropout = 0.2;

    int64_t channel_dim() const { return out_dim / channels; }

    void validate() const {
        if (channels < 1) throw ConfigError("layer: channels must be >= 1");
        if (in_entity_dim < 1 || in_relation_dim < 1 || out_dim < 1)
            throw ConfigError("layer: dimensions must be >= 1");
        if (out_dim % channels != 0)
            throw ConfigError("layer: channels (" + std::to_string(channels) +
                              ") must divide out_dim (" + std::to_string(out_dim) + ")");
    }
};

// Per-channel weight matrices. Total scalar count is
// out_dim*in_entity_dim + out_dim*in_relation_dim + 3*out_dim regardless of K.
struct LayerParams {
    std::vector<Param*> w_entity;    // [d_k x in_entity_dim] per channel
    std::vector<Param*> w_relation;  // [d_k x in_relation_dim] per channel
    std::vector<Param*> w_att;       // [1 x 3*d_k] per channel
};

inline int64_t layer_param_count(const LayerConfig& cfg) {
    cfg.validate();
    return cfg.out_dim * cfg.in_entity_dim + cfg.out_dim * cfg.in_relation_dim + 3 * cfg.out_dim;
}

inline LayerParams init_layer_params(ParamStore& store, const std::string& prefix,
                                     const LayerConfig& cfg, Rng& rng) {
    cfg.validate();
    const int64_t d = cfg.channel_dim();
    LayerParams lp;
    for (int64_t k = 0; k < cfg.channels; ++k) {
        const std::string base = prefix + ".channel" + std::to_string(k);
        lp.w_entity.push_back(&store.create(base + ".w_entity", glorot_uniform(d, cfg.in_entity_dim, rng)));
        lp.w_relation.push_back(&store.create(base + ".w_relation", glorot_uniform(d, cfg.in_relation_dim, rng)));
        lp.w_att.push_back(&store.create(base + ".w_att", glorot_uniform(1, 3 * d, rng)));
    }
    return lp;
}

// Layer parameters bound onto a tape for one forward pass.
struct BoundLayer {
    std::vector<Var> w_entity;
    std::vector<Var> w_relation;
    std::vector<Var> w_att;
};

inline BoundLayer bind_layer(Tape& t, const LayerParams& lp) {
    BoundLayer b;
    for (Param* p : lp.w_entity) b.w_entity.push_back(t.param(*p));
    for (Param* p : lp.w_relation) b.w_relation.push_back(t.param(*p));
    for (Param* p : lp.w_att) b.w_att.push_back(t.param(*p));
    return b;
}

struct ChannelProjection {
    Var entity;    // [N_e x d_k]
    Var relation;  // [N_r_aug x d_k]
};

// e_k = e W_e^T, r_k = r W_r^T: the channel-k subspace views of all entities
// and relations.
inline ChannelProjection channel_project(Tape& t, Var entities, Var relations, Var w_entity_k,
                                         Var w_relation_k) {
    return {t.matmul(entities, w_entity_k, false, true),
            t.matmul(relations, w_relation_k, false, true)};
}

// Per-edge attention logit: leaky_relu(W_f [e_v || r_i || e_u]) for every edge
// u --i--> v, in the graph's flat edge order. Returns [E x 1].
inline Var edge_logits(Tape& t, const MultiRelGraph& g, Var entity_k, Var relation_k, Var w_att_k,
                       double leaky_slope) {
    Var target_feats = t.gather_rows(entity_k, g.edge_target);
    Var rel_feats = t.gather_rows(relation_k, g.edge_relation);
    Var source_feats = t.gather_rows(entity_k, g.edge_source);
    Var cat = t.concat_last_axis({target_feats, rel_feats, source_feats});
    return t.leaky_relu(t.matmul(cat, w_att_k, false, true), leaky_slope);
}

// Softmax over each target entity's full incoming edge set (all neighbors and
// all relations between them). Requires the graph's target-grouped edge order.
inline Var normalize_attention(Tape& t, Var logits, const MultiRelGraph& g) {
    return t.segment_softmax(logits, g.edge_target);
}

// e_v = sigma1( sum over incoming edges of alpha * (e_u ⊙ r_i) ).
inline Var aggregate_channel(Tape& t, const MultiRelGraph& g, Var alpha, Var entity_k,
                             Var relation_k, Nonlin sigma1) {
    Var source_feats = t.gather_rows(entity_k, g.edge_source);
    Var rel_feats = t.gather_rows(relation_k, g.edge_relation);
    Var messages = t.elementwise_mul(source_feats, rel_feats);
    Var weighted = t.elementwise_mul(alpha, messages);
    Var summed = t.scatter_add_rows(weighted, g.edge_target, g.num_entities());
    return apply_nonlin(t, summed, sigma1);
}

struct ForwardOpts {
    bool training = false;
    uint64_t dropout_seed = 0;
};

struct LayerOut {
    Var entity;    // [N_e x out_dim], channels concatenated
    Var relation;  // [N_r_aug x out_dim]
    std::vector<Var> entity_channels;
    std::vector<Var> relation_channels;
    std::vector<Var> alpha;  // per channel, [E x 1]
};

inline LayerOut layer_forward(Tape& t, const MultiRelGraph& g, Var entities, Var relations,
                              const BoundLayer& params, const LayerConfig& cfg,
                              const ForwardOpts& opts = {}, uint64_t layer_salt = 0) {
    cfg.validate();
    if (t.val(entities).cols() != cfg.in_entity_dim || t.val(relations).cols() != cfg.in_relation_dim)
        throw ShapeError("layer_forward: input dims " + shape_str(t.val(entities).shape) + "/" +
                         shape_str(t.val(relations).shape) + " do not match layer config");
    const uint64_t layer_seed = mix_seed(opts.dropout_seed, layer_salt);
    Var e_in = entities;
    Var r_in = relations;
    if (opts.training && cfg.feature_dropout > 0.0) {
        e_in = t.dropout(e_in, cfg.feature_dropout, mix_seed(layer_seed, 0));
        r_in = t.dropout(r_in, cfg.feature_dropout, mix_seed(layer_seed, 1));
    }
    LayerOut out;
    for (int64_t k = 0; k < cfg.channels; ++k) {
        const auto ki = static_cast<size_t>(k);
        ChannelProjection proj =
            channel_project(t, e_in, r_in, params.w_entity[ki], params.w_relation[ki]);
        Var logits = edge_logits(t, g, proj.entity, proj.relation, params.w_att[ki], cfg.leaky_slope);
        Var alpha = normalize_attention(t, logits, g);
        out.alpha.push_back(alpha);
        Var alpha_used = alpha;
        if (opts.training && cfg.attention_dropout > 0.0)
            alpha_used = t.dropout(alpha, cfg.attention_dropout,
                                   mix_seed(layer_seed, 2 + static_cast<uint64_t>(k)));
        out.entity_channels.push_back(
            aggregate_channel(t, g, alpha_used, proj.entity, proj.relation, cfg.aggregate_nonlin));
        out.relation_channels.push_back(proj.relation);
    }
    out.entity = cfg.channels == 1 ? out.entity_channels[0] : t.concat_last_axis(out.entity_channels);
    out.relation =
        cfg.channels == 1 ? out.relation_channels[0] : t.concat_last_axis(out.relation_channels);
    return out;
}

// How relation features reach the next layer and the decoder. The concat rule
// gives relations the same output width as entities; passthrough hands the base
// relation embeddings to every layer unchanged.
enum class RelationMode { concat_channels, passthrough };

struct ModelConfig {
    std::vector<LayerConfig> layers;
    int64_t base_entity_dim = 0;
    int64_t base_relation_dim = 0;
    RelationMode relation_mode = RelationMode::concat_channels;

    int64_t num_layers() const { return static_cast<int64_t>(layers.size()); }
    const LayerConfig& final_layer() const { return layers.back(); }
    int64_t final_entity_dim() const { return layers.back().out_dim; }
    int64_t final_relation_dim() const {
        return relation_mode == RelationMode::concat_channels ? layers.back().out_dim
                                                              : base_relation_dim;
    }
    int64_t final_channels() const { return layers.back().channels; }
    int64_t final_channel_dim() const { return layers.back().channel_dim(); }

    void validate() const {
        if (layers.empty()) throw ConfigError("model: needs at least one layer");
        if (base_entity_dim < 1 || base_relation_dim < 1)
            throw ConfigError("model: base embedding dims must be >= 1");
        int64_t e_dim = base_entity_dim;
        int64_t r_dim = base_relation_dim;
        for (size_t l = 0; l < layers.size(); ++l) {
            layers[l].validate();
            if (layers[l].in_entity_dim != e_dim || layers[l].in_relation_dim != r_dim)
                throw ConfigError("model: layer " + std::to_string(l) + " input dims do not chain");
            e_dim = layers[l].out_dim;
            r_dim = relation_mode == RelationMode::concat_channels ? layers[l].out_dim
                                                                   : base_relation_dim;
        }
    }

    // L identical layers of width `out_dim`, K channels each.
    static ModelConfig uniform(int64_t n_layers, int64_t channels, int64_t base_entity_dim,
                               int64_t base_relation_dim, int64_t out_dim,
                               RelationMode mode = RelationMode::concat_channels) {
        ModelConfig mc;
        mc.base_entity_dim = base_entity_dim;
        mc.base_relation_dim = base_relation_dim;
        mc.relation_mode = mode;
        int64_t e_dim = base_entity_dim;
        int64_t r_dim = base_relation_dim;
        for (int64_t l = 0; l < n_layers; ++l) {
            LayerConfig lc;
            lc.channels = channels;
            lc.in_entity_dim = e_dim;
            lc.in_relation_dim = r_dim;
            lc.out_dim = out_dim;
            mc.layers.push_back(lc);
            e_dim = out_dim;
            r_dim = mode == RelationMode::concat_channels ? out_dim : base_relation_dim;
        }
        return mc;
    }
};

struct EncoderOut {
    Var entity;    // e^(L) [N_e x D_e]
    Var relation;  // relation features seen by the decoder [N_r_aug x D_r]
    std::vector<Var> entity_channels;    // final-layer per-channel slices
    std::vector<Var> relation_channels;  // final-layer per-channel relation views
    std::vector<Var> final_alpha;        // final-layer attention, per channel [E x 1]
};

// Frozen copy of one encoder forward pass. Mounting it on a fresh tape as
// constants lets evaluation and inspection score many batches without
// recomputing the encoder.
struct EncoderSnapshot {
    Array entity;
    Array relation;
    std::vector<Array> entity_channels;
    std::vector<Array> relation_channels;
    std::vector<Array> final_alpha;

    static EncoderSnapshot take(const Tape& t, const EncoderOut& enc) {
        EncoderSnapshot s;
        s.entity = t.val(enc.entity);
        s.relation = t.val(enc.relation);
        for (Var v : enc.entity_channels) s.entity_channels.push_back(t.val(v));
        for (Var v : enc.relation_channels) s.relation_channels.push_back(t.val(v));
        for (Var v : enc.final_alpha) s.final_alpha.push_back(t.val(v));
        return s;
    }

    EncoderOut mount(Tape& t) const {
        EncoderOut enc;
        enc.entity = t.constant(entity);
        enc.relation = t.constant(relation);
        for (const Array& a : entity_channels) enc.entity_channels.push_back(t.constant(a));
        for (const Array& a : relation_channels) enc.relation_channels.push_back(t.constant(a));
        for (const Array& a : final_alpha) enc.final_alpha.push_back(t.constant(a));
        return enc;
    }
};

// The stacked encoder: base embeddings plus L attention layers.
class RgatModel {
public:
    RgatModel(ModelConfig cfg, int64_t n_entities, int64_t n_relations_aug)
        : cfg_(std::move(cfg)), n_entities_(n_entities), n_relations_(n_relations_aug) {
        cfg_.validate();
    }

    const ModelConfig& config() const { return cfg_; }
    int64_t num_entities() const { return n_entities_; }
    int64_t num_relations_aug() const { return n_relations_; }

    void init_params(ParamStore& store, Rng& rng) {
        entity_embed_ = &store.create("entity_embedding",
                                      glorot_uniform(n_entities_, cfg_.base_entity_dim, rng));
        relation_embed_ = &store.create("relation_embedding",
                                        glorot_uniform(n_relations_, cfg_.base_relation_dim, rng));
        layer_params_.clear();
        for (int64_t l = 0; l < cfg_.num_layers(); ++l)
            layer_params_.push_back(init_layer_params(store, "layer" + std::to_string(l),
                                                       cfg_.layers[static_cast<size_t>(l)], rng));
    }

    EncoderOut forward(Tape& t, const MultiRelGraph& g, const ForwardOpts& opts = {}) const {
        if (g.num_entities() != n_entities_ || g.n_relations_aug != n_relations_)
            throw ShapeError("model: graph size does not match the model");
        Var e = t.param(*entity_embed_);
        Var r_base = t.param(*relation_embed_);
        Var r = r_base;
        LayerOut last;
        for (int64_t l = 0; l < cfg_.num_layers(); ++l) {
            last = layer_forward(t, g, e, r, bind_layer(t, layer_params_[static_cast<size_t>(l)]),
                                 cfg_.layers[static_cast<size_t>(l)], opts, static_cast<uint64_t>(l));
            e = last.entity;
            r = cfg_.relation_mode == RelationMode::concat_channels ? last.relation : r_base;
        }
        EncoderOut out;
        out.entity = e;
        out.relation = r;
        out.entity_channels = last.entity_channels;
        out.relation_channels = last.relation_channels;
        out.final_alpha = last.alpha;
        return out;
    }

    int64_t encoder_param_count() const {
        int64_t n = n_entities_ * cfg_.base_entity_dim + n_relations_ * cfg_.base_relation_dim;
        for (const auto& lc : cfg_.layers) n += layer_param_count(lc);
        return n;
    }

private:
    ModelConfig cfg_;
    int64_t n_entities_ = 0;
    int64_t n_relations_ = 0;
    Param* entity_embed_ = nullptr;
    Param* relation_embed_ = nullptr;
    std::vector<LayerParams> layer_params_;
};

}  // namespace rgat
