#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rgat/decoder.hpp"
#include "rgat/layer.hpp"
#include "rgat/optim.hpp"

namespace rgat {

// ---- config text format --------------------------------------------------------
//
//   [section]
//   key = value            # trailing comments allowed
//
// Blank lines and lines starting with '#' are ignored. Keys are addressed as
// "section.key". Unknown keys are errors: a typo must not silently fall back to
// a default.

class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file " + path);
        std::stringstream buf;
        buf << is.rdbuf();
        return parse_text(buf.str(), path);
    }

    static ConfigFile parse_text(const std::string& text, const std::string& origin = "<text>") {
        ConfigFile cf;
        std::istringstream is(text);
        std::string line, section;
        int64_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
                continue;
            }
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            if (cf.values_.count(full))
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key " + full);
            cf.values_[full] = value;
        }
        return cf;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(used_.end(), key);
        return it->second;
    }

    int64_t get_int(const std::string& key, int64_t fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.push_back(key);
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key " + key + " expects an integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.push_back(key);
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key " + key + " expects a number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.push_back(key);
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("config: key " + key + " expects true/false, got '" + it->second + "'");
    }

    std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.push_back(key);
        std::vector<int64_t> out;
        std::istringstream is(it->second);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            try {
                out.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw ConfigError("config: key " + key + " expects integers, got '" + tok + "'");
            }
        }
        return out;
    }

    // Every key in the file must have been consumed by a getter.
    void reject_unknown() const {
        for (const auto& [key, _] : values_) {
            bool found = false;
            for (const auto& u : used_) found = found || u == key;
            if (!found) throw ConfigError("config: unknown key " + key);
        }
    }

private:
    static std::string trim(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r");
        size_t e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> used_;
};

inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

enum class TaskKind { link_prediction, entity_classification };

// One experiment, fully specified. The canonical text (and through it the
// config hash persisted in checkpoints) covers every field that changes what a
// run computes.
struct RunConfig {
    TaskKind task = TaskKind::link_prediction;

    // [data]
    std::string train_path, valid_path, test_path;
    std::string labels_path, split_path;  // entity classification
    std::string aspects_path;             // optional, synthetic aspect map

    // [model]
    int64_t layers = 1;
    int64_t channels = 4;
    int64_t base_entity_dim = 64;
    int64_t base_relation_dim = 64;
    std::vector<int64_t> layer_dims;  // per-layer out_dim; defaults to base_entity_dim
    std::string sigma1 = "elu";
    double leaky_slope = 0.2;
    double attention_dropout = 0.1;
    double feature_dropout = 0.2;
    std::string relation_mode = "concat";  // or "passthrough"

    // [decoder]
    bool qatt = true;
    int64_t query_dim = 0;  // 0: channel width
    int64_t heads = 1;
    std::string sigma2 = "relu";
    std::string sigma3 = "sigmoid";
    double label_smoothing = 0.1;

    // [optimizer]
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t epochs = 500;
    int64_t batch_size = 128;

    // [run]
    uint64_t seed = 42;
    int64_t eval_every = 25;
    int64_t patience = 30;  // evals without improvement before stopping
    std::string out_dir = "out";

    static RunConfig from_file(const std::string& path) {
        ConfigFile cf = ConfigFile::parse_file(path);
        return from_config(cf);
    }

    static RunConfig from_config(ConfigFile& cf) {
        RunConfig rc;
        const std::string task = cf.get_string("task.type", "link_prediction");
        if (task == "link_prediction") rc.task = TaskKind::link_prediction;
        else if (task == "entity_classification") rc.task = TaskKind::entity_classification;
        else throw ConfigError("config: task.type must be link_prediction or entity_classification");

        rc.train_path = cf.get_string("data.train", "");
        rc.valid_path = cf.get_string("data.valid", "");
        rc.test_path = cf.get_string("data.test", "");
        rc.labels_path = cf.get_string("data.labels", "");
        rc.split_path = cf.get_string("data.split", "");
        rc.aspects_path = cf.get_string("data.aspects", "");

        rc.layers = cf.get_int("model.layers", rc.layers);
        rc.channels = cf.get_int("model.channels", rc.channels);
        rc.base_entity_dim = cf.get_int("model.base_entity_dim", rc.base_entity_dim);
        rc.base_relation_dim = cf.get_int("model.base_relation_dim", rc.base_relation_dim);
        rc.layer_dims = cf.get_int_list("model.layer_dims", {});
        rc.sigma1 = cf.get_string("model.sigma1", rc.sigma1);
        rc.leaky_slope = cf.get_double("model.leaky_slope", rc.leaky_slope);
        rc.attention_dropout = cf.get_double("model.attention_dropout", rc.attention_dropout);
        rc.feature_dropout = cf.get_double("model.feature_dropout", rc.feature_dropout);
        rc.relation_mode = cf.get_string("model.relation_mode", rc.relation_mode);

        rc.qatt = cf.get_bool("decoder.qatt", rc.qatt);
        rc.query_dim = cf.get_int("decoder.query_dim", rc.query_dim);
        rc.heads = cf.get_int("decoder.heads", rc.heads);
        rc.sigma2 = cf.get_string("decoder.sigma2", rc.sigma2);
        rc.sigma3 = cf.get_string("decoder.sigma3", rc.sigma3);
        rc.label_smoothing = cf.get_double("decoder.label_smoothing", rc.label_smoothing);

        rc.lr = cf.get_double("optimizer.lr", rc.lr);
        rc.beta1 = cf.get_double("optimizer.beta1", rc.beta1);
        rc.beta2 = cf.get_double("optimizer.beta2", rc.beta2);
        rc.eps = cf.get_double("optimizer.eps", rc.eps);
        rc.epochs = cf.get_int("optimizer.epochs", rc.epochs);
        rc.batch_size = cf.get_int("optimizer.batch_size", rc.batch_size);

        rc.seed = static_cast<uint64_t>(cf.get_int("run.seed", static_cast<int64_t>(rc.seed)));
        rc.eval_every = cf.get_int("run.eval_every", rc.eval_every);
        rc.patience = cf.get_int("run.patience", rc.patience);
        rc.out_dir = cf.get_string("run.out_dir", rc.out_dir);

        cf.reject_unknown();
        rc.normalize();
        return rc;
    }

    void normalize() {
        if (layer_dims.empty()) layer_dims.assign(static_cast<size_t>(layers), base_entity_dim);
    }

    void validate() const {
        if (layers < 1) throw ConfigError("config: model.layers must be >= 1");
        if (static_cast<int64_t>(layer_dims.size()) != layers)
            throw ConfigError("config: model.layer_dims must list one width per layer");
        for (int64_t d : layer_dims)
            if (d < 1 || d % channels != 0)
                throw ConfigError("config: model.channels must divide every layer width");
        if (sigma1 != "elu" && sigma1 != "relu")
            throw ConfigError("config: model.sigma1 must be elu or relu");
        if (relation_mode != "concat" && relation_mode != "passthrough")
            throw ConfigError("config: model.relation_mode must be concat or passthrough");
        if (sigma2 != "relu" && sigma2 != "elu" && sigma2 != "identity")
            throw ConfigError("config: decoder.sigma2 must be relu, elu, or identity");
        if (sigma3 != "sigmoid")
            throw ConfigError("config: decoder.sigma3 only supports sigmoid (BCE needs a probability)");
        if (epochs < 1 || batch_size < 1)
            throw ConfigError("config: optimizer.epochs and batch_size must be >= 1");
        if (eval_every < 1) throw ConfigError("config: run.eval_every must be >= 1");
        if (task == TaskKind::link_prediction) {
            require_file(train_path, "data.train");
        } else {
            require_file(train_path, "data.train");
            require_file(labels_path, "data.labels");
            require_file(split_path, "data.split");
        }
        if (!valid_path.empty()) require_file(valid_path, "data.valid");
        if (!test_path.empty()) require_file(test_path, "data.test");
        if (!aspects_path.empty()) require_file(aspects_path, "data.aspects");
    }

    ModelConfig to_model_config() const {
        ModelConfig mc;
        mc.base_entity_dim = base_entity_dim;
        mc.base_relation_dim = base_relation_dim;
        mc.relation_mode =
            relation_mode == "concat" ? RelationMode::concat_channels : RelationMode::passthrough;
        int64_t e_dim = base_entity_dim;
        int64_t r_dim = base_relation_dim;
        for (int64_t l = 0; l < layers; ++l) {
            LayerConfig lc;
            lc.channels = channels;
            lc.in_entity_dim = e_dim;
            lc.in_relation_dim = r_dim;
            lc.out_dim = layer_dims[static_cast<size_t>(l)];
            lc.leaky_slope = leaky_slope;
            lc.aggregate_nonlin = sigma1 == "elu" ? Nonlin::elu : Nonlin::relu;
            lc.attention_dropout = attention_dropout;
            lc.feature_dropout = feature_dropout;
            mc.layers.push_back(lc);
            e_dim = lc.out_dim;
            r_dim = mc.relation_mode == RelationMode::concat_channels ? lc.out_dim
                                                                      : base_relation_dim;
        }
        return mc;
    }

    QattConfig to_qatt_config() const {
        QattConfig qc;
        qc.query_dim = query_dim;
        qc.heads = heads;
        qc.qatt_enabled = qatt;
        qc.label_smoothing = label_smoothing;
        qc.sigma2 = sigma2 == "relu"  ? ScoreNonlin::relu
                    : sigma2 == "elu" ? ScoreNonlin::elu
                                      : ScoreNonlin::identity;
        return qc;
    }

    AdamConfig to_adam_config() const { return {lr, beta1, beta2, eps}; }

    // Deterministic serialization; its FNV-1a hash identifies the experiment in
    // checkpoints. out_dir is deliberately excluded: moving outputs elsewhere
    // does not change what was trained.
    std::string canonical_text() const {
        std::ostringstream os;
        os << "task=" << (task == TaskKind::link_prediction ? "lp" : "ec") << "\n";
        os << "train=" << train_path << "\nvalid=" << valid_path << "\ntest=" << test_path << "\n";
        os << "labels=" << labels_path << "\nsplit=" << split_path << "\n";
        os << "layers=" << layers << "\nchannels=" << channels << "\n";
        os << "base_entity_dim=" << base_entity_dim << "\nbase_relation_dim=" << base_relation_dim
           << "\n";
        os << "layer_dims=";
        for (int64_t d : layer_dims) os << d << ",";
        os << "\nsigma1=" << sigma1 << "\nleaky_slope=" << fmt_double(leaky_slope, 17) << "\n";
        os << "attention_dropout=" << fmt_double(attention_dropout, 17) << "\n";
        os << "feature_dropout=" << fmt_double(feature_dropout, 17) << "\n";
        os << "relation_mode=" << relation_mode << "\n";
        os << "qatt=" << qatt << "\nquery_dim=" << query_dim << "\nheads=" << heads << "\n";
        os << "sigma2=" << sigma2 << "\nsigma3=" << sigma3 << "\n";
        os << "label_smoothing=" << fmt_double(label_smoothing, 17) << "\n";
        os << "lr=" << fmt_double(lr, 17) << "\nbeta1=" << fmt_double(beta1, 17)
           << "\nbeta2=" << fmt_double(beta2, 17) << "\neps=" << fmt_double(eps, 17) << "\n";
        os << "epochs=" << epochs << "\nbatch_size=" << batch_size << "\n";
        os << "seed=" << seed << "\neval_every=" << eval_every << "\npatience=" << patience << "\n";
        return os.str();
    }

    uint64_t hash() const { return fnv1a64(canonical_text()); }

private:
    static void require_file(const std::string& path, const char* key) {
        if (path.empty()) throw ConfigError(std::string("config: ") + key + " is required");
        if (!std::filesystem::exists(path))
            throw ConfigError(std::string("config: ") + key + " path does not exist: " + path);
    }
};

}  // namespace rgat
