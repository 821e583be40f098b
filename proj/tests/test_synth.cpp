#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rgat/synth.hpp"
#include "rgat/train.hpp"

using namespace rgat;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("generation is deterministic: same spec and seed, identical files", "[synth]") {
    namespace fs = std::filesystem;
    SynthSpec spec;
    spec.aspects = 2;
    spec.relations_per_aspect = 2;
    spec.entities = 60;
    spec.density = 0.15;
    spec.seed = 91;

    const fs::path d1 = fs::temp_directory_path() / "rgat_synth_a";
    const fs::path d2 = fs::temp_directory_path() / "rgat_synth_b";
    write_synthetic(generate_synthetic(spec), d1.string());
    write_synthetic(generate_synthetic(spec), d2.string());
    for (const char* name : {"train.txt", "valid.txt", "test.txt", "aspects.tsv", "labels.tsv",
                             "label_split.tsv"})
        CHECK(slurp(d1 / name) == slurp(d2 / name));

    // a different seed must change the data
    spec.seed = 92;
    write_synthetic(generate_synthetic(spec), d2.string());
    CHECK(slurp(d1 / "train.txt") != slurp(d2 / "train.txt"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("every relation belongs to exactly one aspect", "[synth]") {
    SynthSpec spec;
    spec.aspects = 3;
    spec.relations_per_aspect = 4;
    spec.entities = 50;
    spec.density = 0.2;
    spec.seed = 5;
    SynthData d = generate_synthetic(spec);
    REQUIRE(d.relation_names.size() == 12);
    REQUIRE(d.relation_aspect.size() == 12);
    std::vector<int64_t> per_aspect(3, 0);
    for (int64_t a : d.relation_aspect) {
        REQUIRE(a >= 0);
        REQUIRE(a < 3);
        ++per_aspect[static_cast<size_t>(a)];
    }
    for (int64_t n : per_aspect) CHECK(n == 4);
}

TEST_CASE("edges respect the planted group structure", "[synth]") {
    SynthSpec spec;
    spec.aspects = 2;
    spec.relations_per_aspect = 3;
    spec.entities = 40;
    spec.density = 0.3;
    spec.seed = 17;
    SynthData d = generate_synthetic(spec);

    // within one relation, the (source group -> target group) map is a function
    for (size_t r = 0; r < d.relation_names.size(); ++r) {
        const int64_t aspect = d.relation_aspect[r];
        std::unordered_map<int64_t, int64_t> image;
        for (const auto& split : {d.train, d.valid, d.test})
            for (const Triplet& t : split) {
                if (t.relation != static_cast<int64_t>(r)) continue;
                const int64_t gs = d.attributes[static_cast<size_t>(aspect)][static_cast<size_t>(t.subject)];
                const int64_t go = d.attributes[static_cast<size_t>(aspect)][static_cast<size_t>(t.object)];
                auto [it, fresh] = image.try_emplace(gs, go);
                CHECK(it->second == go);
            }
    }
}

TEST_CASE("valid and test names always appear in train", "[synth]") {
    SynthSpec spec;
    spec.aspects = 4;
    spec.relations_per_aspect = 3;
    spec.entities = 70;
    spec.density = 0.12;
    spec.seed = 23;
    SynthData d = generate_synthetic(spec);
    CHECK(!d.valid.empty());
    CHECK(!d.test.empty());

    std::set<int64_t> train_entities, train_relations;
    for (const Triplet& t : d.train) {
        train_entities.insert(t.subject);
        train_entities.insert(t.object);
        train_relations.insert(t.relation);
    }
    for (const auto& split : {d.valid, d.test})
        for (const Triplet& t : split) {
            CHECK(train_entities.count(t.subject) == 1);
            CHECK(train_entities.count(t.object) == 1);
            CHECK(train_relations.count(t.relation) == 1);
        }
}

TEST_CASE("generated files load through the standard dataset path", "[synth]") {
    namespace fs = std::filesystem;
    SynthSpec spec;
    spec.entities = 50;
    spec.density = 0.15;
    spec.seed = 3;
    const fs::path dir = fs::temp_directory_path() / "rgat_synth_load";
    write_synthetic(generate_synthetic(spec), dir.string());

    LpDataset data = LpDataset::load((dir / "train.txt").string(), (dir / "valid.txt").string(),
                                     (dir / "test.txt").string());
    CHECK(data.graph.edge_count ==
          2 * static_cast<int64_t>(data.train.size()) + data.vocab.num_entities());
    const auto aspects = load_aspect_map((dir / "aspects.tsv").string());
    CHECK(aspects.size() == 4);

    // the labels load too
    Vocab& vocab = data.vocab;
    LabelSet ls = load_labels((dir / "labels.tsv").string(), (dir / "label_split.tsv").string(),
                              vocab);
    CHECK(ls.num_classes == spec.groups);
    CHECK(!ls.train_ids.empty());
    CHECK(!ls.valid_ids.empty());
    CHECK(!ls.test_ids.empty());
    fs::remove_all(dir);
}

TEST_CASE("infeasible densities are rejected", "[synth]") {
    SynthSpec spec;
    spec.entities = 8;
    spec.groups = 4;
    spec.density = 0.001;  // rounds to zero edges per relation
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
    spec.density = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
    spec.density = 0.5;
    spec.groups = 20;  // more groups than entities
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}
