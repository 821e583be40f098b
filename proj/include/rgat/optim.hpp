#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rgat/core.hpp"
#include "rgat/tape.hpp"

namespace rgat {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameters plus their gradients and Adam state. Creation order is the
// deterministic iteration order, so identical construction sequences give
// identical init draws and identical updates.
class ParamStore {
public:
    Param& create(const std::string& name, Array init) {
        if (index_.count(name)) throw Error("ParamStore: duplicate parameter " + name);
        params_.push_back(std::make_unique<Param>(name, std::move(init)));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    Param& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
        return *params_[it->second];
    }
    const Param& get(const std::string& name) const {
        return const_cast<ParamStore*>(this)->get(name);
    }

    std::vector<Param*> all() {
        std::vector<Param*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }
    std::vector<const Param*> all() const {
        std::vector<const Param*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    size_t size() const { return params_.size(); }
    int64_t step_count() const { return t_; }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (auto& p : params_) n += p->value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_)
            std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    }

    // Bias-corrected Adam on every parameter, then gradients are zeroed and the
    // step counter advances.
    void adam_step(const AdamConfig& cfg) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        for (auto& p : params_) {
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                const double g = p->grad[i];
                p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
                p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
                const double mhat = p->m[i] / bc1;
                const double vhat = p->v[i] / bc2;
                p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
        zero_grads();
    }

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, size_t> index_;
    int64_t t_ = 0;
};

// ---- checkpoint format ------------------------------------------------------
//
// Byte layout (all integers and doubles little-endian):
//   magic "RGATCKPT" | version u8 (=1) | config_hash u64 | epoch u32 |
//   best_metric f64 | param_count u32 | param records
// record: name_len u32 | name bytes | ndim u32 | dims u64[ndim] | values f64[numel]

struct CheckpointMeta {
    uint64_t config_hash = 0;
    uint32_t epoch = 0;
    double best_metric = 0.0;
};

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    uint64_t bits;
    if constexpr (sizeof(T) == 8) {
        std::memcpy(&bits, &v, 8);
    } else {
        bits = static_cast<uint64_t>(v);
    }
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    put_bytes(os, buf, sizeof(T));
}

inline void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le<uint64_t>(os, bits);
}

inline bool get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    return static_cast<size_t>(is.gcount()) == n;
}

template <class T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    if (!get_bytes(is, buf, sizeof(T))) throw ParseError("checkpoint: truncated file");
    uint64_t bits = 0;
    for (size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
    if constexpr (sizeof(T) == 8) {
        T v;
        std::memcpy(&v, &bits, 8);
        return v;
    } else {
        return static_cast<T>(bits);
    }
}

inline double get_f64(std::istream& is) {
    uint64_t bits = get_le<uint64_t>(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline constexpr char kCkptMagic[8] = {'R', 'G', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint8_t kCkptVersion = 1;

}  // namespace detail

inline void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta,
                            const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("checkpoint: cannot write " + path);
    detail::put_bytes(os, detail::kCkptMagic, 8);
    detail::put_le<uint8_t>(os, detail::kCkptVersion);
    detail::put_le<uint64_t>(os, meta.config_hash);
    detail::put_le<uint32_t>(os, meta.epoch);
    detail::put_f64(os, meta.best_metric);
    const auto params = store.all();
    detail::put_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const Param* p : params) {
        detail::put_le<uint32_t>(os, static_cast<uint32_t>(p->name.size()));
        detail::put_bytes(os, p->name.data(), p->name.size());
        detail::put_le<uint32_t>(os, static_cast<uint32_t>(p->value.shape.size()));
        for (int64_t d : p->value.shape) detail::put_le<uint64_t>(os, static_cast<uint64_t>(d));
        for (double v : p->value.data) detail::put_f64(os, v);
    }
    if (!os) throw Error("checkpoint: write failed for " + path);
}

// Overwrites the values of an already-constructed store. Names and shapes must
// match the file exactly; this catches config/checkpoint mixups before any
// evaluation runs.
inline CheckpointMeta load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot read " + path);
    char magic[8];
    if (!detail::get_bytes(is, magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic in " + path);
    const uint8_t version = detail::get_le<uint8_t>(is);
    if (version != detail::kCkptVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    CheckpointMeta meta;
    meta.config_hash = detail::get_le<uint64_t>(is);
    meta.epoch = detail::get_le<uint32_t>(is);
    meta.best_metric = detail::get_f64(is);
    const uint32_t count = detail::get_le<uint32_t>(is);
    if (count != store.size())
        throw Error("checkpoint: file has " + std::to_string(count) + " parameters, model has " +
                    std::to_string(store.size()));
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = detail::get_le<uint32_t>(is);
        std::string name(name_len, '\0');
        if (!detail::get_bytes(is, name.data(), name_len))
            throw ParseError("checkpoint: truncated file");
        const uint32_t ndim = detail::get_le<uint32_t>(is);
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d)
            shape[d] = static_cast<int64_t>(detail::get_le<uint64_t>(is));
        if (!store.has(name)) throw Error("checkpoint: unexpected parameter " + name);
        Param& p = store.get(name);
        if (p.value.shape != shape)
            throw Error("checkpoint: shape mismatch for " + name + ": file " + shape_str(shape) +
                        ", model " + shape_str(p.value.shape));
        for (int64_t k = 0; k < p.value.numel(); ++k) p.value[k] = detail::get_f64(is);
    }
    return meta;
}

}  // namespace rgat
