#include <catch2/catch_amalgamated.hpp>

#include "rgat/inspect.hpp"
#include "testutil.hpp"

using namespace rgat;

namespace {

struct InspectFixture {
    rgat::test::RandomKg kg;
    ModelConfig mc;
    RgatModel model;
    QattDecoder decoder;
    ParamStore store;

    explicit InspectFixture(int64_t channels, uint64_t seed = 3, int64_t out_dim = 8)
        : kg(rgat::test::random_kg(10, 4, 20, seed)),
          mc(ModelConfig::uniform(1, channels, 4, 4, out_dim)),
          model(mc, kg.graph.num_entities(), kg.graph.n_relations_aug),
          decoder(QattConfig{}, mc) {
        Rng rng(seed + 5);
        model.init_params(store, rng);
        decoder.init_params(store, rng);
    }

    std::vector<std::string> relation_names() const {
        std::vector<std::string> names;
        for (int64_t r = 0; r < kg.vocab.num_base_relations(); ++r)
            names.push_back(kg.vocab.relation_name(r));
        return names;
    }
};

}  // namespace

TEST_CASE("channel attention summary rows are distributions over channels", "[inspect]") {
    InspectFixture fx(4);
    auto rep = channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                         fx.relation_names(), 6, 77);
    REQUIRE(rep.relations.size() == 4);
    REQUIRE(rep.channels == 4);
    CHECK(rep.sample_size == 6);
    for (const auto& row : rep.mean_beta) {
        double s = 0.0;
        for (double v : row) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
    const std::string text = rep.text();
    CHECK(text.find("ch0") != std::string::npos);
    CHECK(text.find(fx.relation_names()[0]) != std::string::npos);
    CHECK(rep.machine_lines().find("beta\t") != std::string::npos);
}

TEST_CASE("K=1 summaries are identically one", "[inspect]") {
    InspectFixture fx(1);
    auto rep = channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                         fx.relation_names(), 5, 9);
    for (const auto& row : rep.mean_beta) {
        REQUIRE(row.size() == 1);
        CHECK(row[0] == 1.0);
    }
}

TEST_CASE("identical channel parameters give uniform summary rows", "[inspect]") {
    InspectFixture fx(4);
    // copy channel 0's weights into every channel: slices become identical
    for (int64_t k = 1; k < 4; ++k) {
        const std::string src = "layer0.channel0";
        const std::string dst = "layer0.channel" + std::to_string(k);
        fx.store.get(dst + ".w_entity").value = fx.store.get(src + ".w_entity").value;
        fx.store.get(dst + ".w_relation").value = fx.store.get(src + ".w_relation").value;
        fx.store.get(dst + ".w_att").value = fx.store.get(src + ".w_att").value;
    }
    auto rep = channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                         fx.relation_names(), 8, 13);
    for (const auto& row : rep.mean_beta)
        for (double v : row) CHECK(v == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("unknown relation names are vocabulary errors", "[inspect]") {
    InspectFixture fx(2);
    CHECK_THROWS_AS(channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                              {"no_such_relation"}, 4, 1),
                    VocabError);
    CHECK_THROWS_AS(top_facts(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab, "e0", "nope", 2, 2),
                    VocabError);
    CHECK_THROWS_AS(top_facts(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab, "ghost", "r0", 2, 2),
                    VocabError);
}

TEST_CASE("top_facts lists channels by beta and facts by alpha", "[inspect]") {
    InspectFixture fx(4);
    auto rep = top_facts(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab, "e2", "r1", 3, 4);
    REQUIRE(rep.channels.size() == 3);
    double prev_beta = 1.0;
    double beta_sum = 0.0;
    for (const auto& c : rep.channels) {
        CHECK(c.beta <= prev_beta + 1e-12);
        prev_beta = c.beta;
        beta_sum += c.beta;
        double prev_alpha = 1.0;
        double alpha_sum = 0.0;
        for (const auto& f : c.facts) {
            CHECK(f.alpha <= prev_alpha + 1e-12);
            prev_alpha = f.alpha;
            alpha_sum += f.alpha;
            CHECK(f.subject == "e2");
        }
        CHECK(alpha_sum <= 1.0 + 1e-9);
    }
    CHECK(beta_sum <= 1.0 + 1e-9);
    const std::string text = rep.text();
    CHECK(text.find("subject: e2") != std::string::npos);
    CHECK(text.find("channel ") != std::string::npos);
}

TEST_CASE("a subject with only a self-loop lists that single fact with alpha 1", "[inspect]") {
    Vocab vocab;
    vocab.add_entity("lone");
    vocab.add_entity("other");
    vocab.add_relation("r");
    vocab.augment_relations();
    // one edge between the others; "lone" keeps only its self-loop
    MultiRelGraph g = build_graph(std::vector<Triplet>{}, vocab);

    ModelConfig mc = ModelConfig::uniform(1, 2, 4, 4, 6);
    RgatModel model(mc, g.num_entities(), g.n_relations_aug);
    QattDecoder decoder(QattConfig{}, mc);
    ParamStore store;
    Rng rng(2);
    model.init_params(store, rng);
    decoder.init_params(store, rng);

    auto rep = top_facts(model, decoder, g, vocab, "lone", "r", 1, 5);
    REQUIRE(rep.channels.size() == 1);
    REQUIRE(rep.channels[0].facts.size() == 1);
    CHECK(rep.channels[0].facts[0].relation == Vocab::kSelfLoopName);
    CHECK(rep.channels[0].facts[0].alpha == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("reports are deterministic given parameters and seed", "[inspect]") {
    InspectFixture fx(4);
    auto r1 = channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                        fx.relation_names(), 6, 123);
    auto r2 = channel_attention_summary(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab,
                                        fx.relation_names(), 6, 123);
    CHECK(r1.text() == r2.text());
    CHECK(r1.machine_lines() == r2.machine_lines());

    auto f1 = top_facts(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab, "e1", "r0", 2, 3);
    auto f2 = top_facts(fx.model, fx.decoder, fx.kg.graph, fx.kg.vocab, "e1", "r0", 2, 3);
    CHECK(f1.text() == f2.text());
}

TEST_CASE("alignment score: perfect, chance, and degenerate cases", "[inspect]") {
    // hand-built report: 2 aspects x 3 relations, perfectly routed
    ChannelAttentionReport rep;
    rep.channels = 4;
    std::unordered_map<std::string, int64_t> aspect;
    for (int i = 0; i < 6; ++i) {
        const std::string name = "rel" + std::to_string(i);
        rep.relations.push_back(name);
        aspect[name] = i / 3;
        std::vector<double> row(4, 0.02);
        row[static_cast<size_t>(i / 3)] = 0.94;  // aspect 0 -> channel 0, aspect 1 -> channel 1
        rep.mean_beta.push_back(row);
    }
    CHECK(aspect_alignment_score(rep, aspect) == 1.0);

    // scattered argmaxes score strictly lower
    rep.mean_beta[1] = {0.1, 0.1, 0.7, 0.1};
    rep.mean_beta[4] = {0.7, 0.1, 0.1, 0.1};
    const double partial = aspect_alignment_score(rep, aspect);
    CHECK(partial < 1.0);
    CHECK(partial == Catch::Approx(2.0 / 3.0));

    // K=1 degenerates to a perfect score by definition
    ChannelAttentionReport single;
    single.channels = 1;
    single.relations = {"r"};
    single.mean_beta = {{1.0}};
    CHECK(aspect_alignment_score(single, {{"r", 0}}) == 1.0);

    // Monte-Carlo chance level: for 4 channels and aspects of size 3, the modal
    // fraction of uniform draws sits well below 1
    const double chance = alignment_chance_baseline(4, {3, 3}, 4000, 99);
    CHECK(chance > 0.3);
    CHECK(chance < 0.75);

    // missing aspect mapping is an error
    CHECK_THROWS_AS(aspect_alignment_score(rep, {{"rel0", 0}}), VocabError);
}
