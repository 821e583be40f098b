// Command-line surface: training, evaluation, channel sweeps, synthetic data
// generation, and attention inspection. Every run is reproducible from
// (config, seed); logs and reports carry no timestamps on purpose.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "rgat/rgat.hpp"

namespace fs = std::filesystem;
using namespace rgat;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::string checkpoint;
};

RunConfig load_run_config(const GlobalOpts& g, TaskKind expected) {
    RunConfig cfg = RunConfig::from_file(g.config_path);
    if (cfg.task != expected)
        throw ConfigError("config task does not match this subcommand");
    if (g.seed) cfg.seed = *g.seed;
    if (g.out_dir) cfg.out_dir = *g.out_dir;
    cfg.validate();
    return cfg;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}

void dump_vocab_files(const Vocab& vocab, const std::string& out_dir) {
    auto ents = open_out(fs::path(out_dir) / "entities.dict");
    vocab.dump_entities(ents);
    auto rels = open_out(fs::path(out_dir) / "relations.dict");
    vocab.dump_relations(rels);
}

std::span<const Triplet> pick_split(const LpDataset& data, const std::string& name) {
    if (name == "train") return data.train;
    if (name == "valid") return data.valid;
    if (name == "test") return data.test;
    throw ConfigError("--split must be train, valid, or test");
}

int cmd_train_lp(const GlobalOpts& g) {
    RunConfig cfg = load_run_config(g, TaskKind::link_prediction);
    LpDataset data = LpDataset::load(cfg);
    std::cout << "loaded " << data.train.size() << " train / " << data.valid.size() << " valid / "
              << data.test.size() << " test triplets, " << data.vocab.num_entities()
              << " entities, " << data.vocab.num_base_relations() << " relations\n";
    fs::create_directories(cfg.out_dir);
    dump_vocab_files(data.vocab, cfg.out_dir);
    {
        auto os = open_out(fs::path(cfg.out_dir) / "run_config.txt");
        os << cfg.canonical_text();
    }
    auto metrics = open_out(fs::path(cfg.out_dir) / "metrics.tsv");

    LpPipeline pipe(cfg, data);
    std::cout << "parameters: " << pipe.store.scalar_count() << " (encoder "
              << pipe.model->encoder_param_count() << ")\n";
    TrainResult res = train_lp(pipe, data, cfg, &metrics);
    std::cout << "best validation MRR " << fmt_double(res.best_metric, 6) << " at epoch "
              << res.best_epoch << (res.early_stopped ? " (early stop)" : "") << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n";
    return 0;
}

int cmd_train_ec(const GlobalOpts& g) {
    RunConfig cfg = load_run_config(g, TaskKind::entity_classification);
    EcDataset data = EcDataset::load(cfg);
    std::cout << "loaded " << data.train.size() << " train triplets, "
              << data.vocab.num_entities() << " entities, " << data.labels.num_classes
              << " classes\n";
    fs::create_directories(cfg.out_dir);
    dump_vocab_files(data.vocab, cfg.out_dir);
    {
        auto os = open_out(fs::path(cfg.out_dir) / "run_config.txt");
        os << cfg.canonical_text();
    }
    auto metrics = open_out(fs::path(cfg.out_dir) / "metrics.tsv");

    EcPipeline pipe(cfg, data);
    TrainResult res = train_ec(pipe, data, cfg, &metrics);
    std::cout << "best validation accuracy " << fmt_double(res.best_metric, 6) << " at epoch "
              << res.best_epoch << (res.early_stopped ? " (early stop)" : "") << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n";
    return 0;
}

int cmd_eval_lp(const GlobalOpts& g, const std::string& split) {
    RunConfig cfg = load_run_config(g, TaskKind::link_prediction);
    if (g.checkpoint.empty()) throw ConfigError("eval-lp needs --checkpoint");
    LpDataset data = LpDataset::load(cfg);
    LpPipeline pipe(cfg, data);
    const CheckpointMeta meta = load_checkpoint(pipe.store, g.checkpoint);
    if (meta.config_hash != cfg.hash())
        std::cerr << "warning: checkpoint was trained under a different config\n";

    const auto triplets = pick_split(data, split);
    if (triplets.empty()) throw Error("split '" + split + "' is empty");
    RankReport rep = pipe.evaluate_split(data, triplets, cfg.seed);
    std::cout << rep.table() << rep.machine_lines();
    if (g.out_dir || !cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        auto os = open_out(fs::path(cfg.out_dir) / ("eval_" + split + ".txt"));
        os << rep.table() << rep.machine_lines();
    }
    return 0;
}

int cmd_eval_ec(const GlobalOpts& g, const std::string& split) {
    RunConfig cfg = load_run_config(g, TaskKind::entity_classification);
    if (g.checkpoint.empty()) throw ConfigError("eval-ec needs --checkpoint");
    EcDataset data = EcDataset::load(cfg);
    EcPipeline pipe(cfg, data);
    load_checkpoint(pipe.store, g.checkpoint);

    std::span<const int64_t> ids;
    if (split == "train") ids = data.labels.train_ids;
    else if (split == "valid") ids = data.labels.valid_ids;
    else if (split == "test") ids = data.labels.test_ids;
    else throw ConfigError("--split must be train, valid, or test");
    if (ids.empty()) throw Error("split '" + split + "' has no labeled entities");

    const double acc = accuracy(pipe.probabilities(data.graph), data.labels, ids);
    std::cout << "accuracy=" << fmt_double(acc, 6) << "\n";
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        auto os = open_out(fs::path(cfg.out_dir) / ("eval_" + split + ".txt"));
        os << "accuracy=" << fmt_double(acc, 6) << "\n";
    }
    return 0;
}

int cmd_sweep_k(const GlobalOpts& g, std::vector<int64_t> ks) {
    RunConfig cfg = load_run_config(g, TaskKind::link_prediction);
    if (ks.empty()) throw ConfigError("sweep-k needs --k with at least one value");
    LpDataset data = LpDataset::load(cfg);
    SweepTable table = sweep_channels(cfg, data, ks, &std::cout);
    std::cout << table.render();
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        auto os = open_out(fs::path(cfg.out_dir) / "sweep.tsv");
        os << table.render();
    }
    return 0;
}

int cmd_gen_synth(const SynthSpec& spec, const std::string& out_dir) {
    SynthData d = generate_synthetic(spec);
    write_synthetic(d, out_dir);
    std::cout << "wrote " << d.train.size() << " train / " << d.valid.size() << " valid / "
              << d.test.size() << " test triplets, " << d.relation_names.size() << " relations in "
              << spec.aspects << " aspects, " << spec.entities << " entities -> " << out_dir
              << "\n";
    return 0;
}

int cmd_inspect(const GlobalOpts& g, const std::string& subject, const std::string& relation,
                const std::string& relations_csv, int64_t top_channels, int64_t top_facts_n,
                int64_t sample) {
    RunConfig cfg = load_run_config(g, TaskKind::link_prediction);
    if (g.checkpoint.empty()) throw ConfigError("inspect needs --checkpoint");
    LpDataset data = LpDataset::load(cfg);
    LpPipeline pipe(cfg, data);
    load_checkpoint(pipe.store, g.checkpoint);

    std::ostringstream report;
    if (!subject.empty()) {
        if (relation.empty()) throw ConfigError("--subject needs --relation");
        FactAttributionReport rep = top_facts(*pipe.model, *pipe.decoder, data.graph, data.vocab,
                                              subject, relation, top_channels, top_facts_n);
        report << rep.text();
    } else {
        std::vector<std::string> names;
        if (relations_csv.empty() || relations_csv == "all") {
            for (int64_t r = 0; r < data.vocab.num_base_relations(); ++r)
                names.push_back(data.vocab.relation_name(r));
        } else {
            std::istringstream is(relations_csv);
            std::string tok;
            while (std::getline(is, tok, ',')) names.push_back(tok);
        }
        ChannelAttentionReport rep = channel_attention_summary(
            *pipe.model, *pipe.decoder, data.graph, data.vocab, names, sample, cfg.seed);
        report << rep.text() << rep.machine_lines();
        if (!cfg.aspects_path.empty()) {
            const auto aspects = load_aspect_map(cfg.aspects_path);
            if (pipe.decoder->channels() == 1)
                std::cerr << "warning: single-channel model, alignment is trivially 1.0\n";
            report << "aspect_alignment=" << fmt_double(aspect_alignment_score(rep, aspects), 6)
                   << "\n";
        }
    }
    std::cout << report.str();
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        auto os = open_out(fs::path(cfg.out_dir) / "inspect.txt");
        os << report.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-channel relational graph attention toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config file");
    app.add_option("--seed", g.seed, "override run.seed");
    app.add_option("--out-dir", g.out_dir, "override run.out_dir");
    app.add_option("--checkpoint", g.checkpoint, "checkpoint file");

    auto* train_lp_cmd = app.add_subcommand("train-lp", "train a link-prediction model");
    auto* train_ec_cmd = app.add_subcommand("train-ec", "train an entity classifier");

    std::string split = "test";
    auto* eval_lp_cmd = app.add_subcommand("eval-lp", "evaluate filtered ranking metrics");
    eval_lp_cmd->add_option("--split", split, "train|valid|test (default test)");
    auto* eval_ec_cmd = app.add_subcommand("eval-ec", "evaluate classification accuracy");
    eval_ec_cmd->add_option("--split", split, "train|valid|test (default test)");

    std::vector<int64_t> ks;
    auto* sweep_cmd = app.add_subcommand("sweep-k", "train once per channel count");
    sweep_cmd->add_option("--k", ks, "channel counts, e.g. --k 1 2 4 8")->delimiter(',');

    SynthSpec spec;
    std::string synth_out = "data/synth";
    auto* synth_cmd = app.add_subcommand("gen-synth", "generate a planted-aspect synthetic KG");
    synth_cmd->add_option("--aspects", spec.aspects, "latent aspects");
    synth_cmd->add_option("--relations-per-aspect", spec.relations_per_aspect, "relations per aspect");
    synth_cmd->add_option("--entities", spec.entities, "entity count");
    synth_cmd->add_option("--groups", spec.groups, "groups per aspect (also the class count)");
    synth_cmd->add_option("--density", spec.density, "fraction of compatible pairs kept");

    std::string subject, relation, relations_csv;
    int64_t top_channels = 3, top_facts_n = 4, sample = 100;
    auto* inspect_cmd = app.add_subcommand("inspect", "attention reports from a checkpoint");
    inspect_cmd->add_option("--subject", subject, "subject entity name (fact report)");
    inspect_cmd->add_option("--relation", relation, "query relation name (fact report)");
    inspect_cmd->add_option("--relations", relations_csv,
                            "comma-separated relation names for the summary, or 'all'");
    inspect_cmd->add_option("--top-channels", top_channels, "channels listed in the fact report");
    inspect_cmd->add_option("--top-facts", top_facts_n, "facts listed per channel");
    inspect_cmd->add_option("--sample", sample, "entities sampled for the summary");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_lp_cmd->parsed()) return cmd_train_lp(g);
        if (train_ec_cmd->parsed()) return cmd_train_ec(g);
        if (eval_lp_cmd->parsed()) return cmd_eval_lp(g, split);
        if (eval_ec_cmd->parsed()) return cmd_eval_ec(g, split);
        if (sweep_cmd->parsed()) return cmd_sweep_k(g, ks);
        if (synth_cmd->parsed()) {
            if (g.seed) spec.seed = *g.seed;
            return cmd_gen_synth(spec, g.out_dir.value_or(synth_out));
        }
        if (inspect_cmd->parsed())
            return cmd_inspect(g, subject, relation, relations_csv, top_channels, top_facts_n,
                               sample);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
