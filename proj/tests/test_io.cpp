#include <catch2/catch_amalgamated.hpp>

#include "decwatt/io.hpp"
#include "decwatt/simlab.hpp"

using namespace decwatt;

TEST_CASE("feature CSV round trip") {
    const auto t = trace::generate_random_trace(1, 300);
    for (const auto kind : {features::FeatureKind::FA, features::FeatureKind::FS}) {
        const auto v = features::count_features(t, kind);
        const auto csv = io::write_feature_csv(v);
        const auto back = io::read_feature_csv(csv, "test");
        CHECK(back == v);
        CHECK(io::write_feature_csv(back) == csv);
    }
}

TEST_CASE("feature CSV rejects shuffled or truncated id lists") {
    const auto v = features::count_features(trace::generate_random_trace(2, 50),
                                            features::FeatureKind::FS);
    auto csv = io::write_feature_csv(v);
    CHECK_THROWS_AS(io::read_feature_csv("bogus\n", "test"), DataError);
    // drop one row: 26 ids match neither catalogue
    csv.erase(csv.rfind("SAO_C"));
    CHECK_THROWS_AS(io::read_feature_csv(csv, "test"), DataError);
}

TEST_CASE("features matrix round trip and lookup") {
    std::vector<std::pair<std::string, features::FeatureVector>> rows;
    for (std::uint64_t s = 0; s < 4; ++s)
        rows.emplace_back("stream" + std::to_string(s),
                          features::count_features(trace::generate_random_trace(s, 100),
                                                   features::FeatureKind::FS));
    const auto csv = io::write_features_matrix(rows, features::FeatureKind::FS);
    const auto map = io::read_features_matrix(csv, "test");
    REQUIRE(map.size() == 4);
    for (const auto& [id, v] : rows) CHECK(map.at(id) == v);
}

TEST_CASE("dataset CSV round trip preserves bytes and optionals") {
    simlab::GeneratorConfig config;
    config.model_id = models::ModelId::H2;
    config.seed = 9;
    config.noise_rel_sigma = 0.01;
    auto gen = simlab::generate_dataset(config, 50);
    gen.dataset.rows[0].meta.decode_time_s.reset();
    gen.dataset.rows[1].meta.pe.reset();
    gen.dataset.rows[2].meta.mem.reset();
    const auto csv = io::write_dataset_csv(gen.dataset);
    const auto back = io::read_dataset_csv(csv, "test");
    REQUIRE(back.rows.size() == gen.dataset.rows.size());
    CHECK(io::write_dataset_csv(back) == csv);
    CHECK_FALSE(back.rows[0].meta.decode_time_s.has_value());
    CHECK_FALSE(back.rows[1].meta.pe.has_value());
    CHECK_FALSE(back.rows[2].meta.mem.has_value());
    CHECK(back.rows[3].meta == gen.dataset.rows[3].meta);
}

TEST_CASE("dataset CSV validation") {
    CHECK_THROWS_AS(io::read_dataset_csv("not,a,header\n", "test"), DataError);
    const std::string header(io::kDatasetHeader);
    // pe_if without pe_l1dm
    CHECK_THROWS_AS(
        io::read_dataset_csv(header + "\nx,s,c,32,1,100,1,50,1,0.1,0.5,1.0,5,,,,2.0\n", "test"),
        DataError);
    // wrong cell count
    CHECK_THROWS_AS(io::read_dataset_csv(header + "\nx,s,c\n", "test"), DataError);
}

TEST_CASE("trained model JSON round trip for every layout") {
    simlab::GeneratorConfig config;
    config.seed = 10;
    for (const auto id : {models::ModelId::FS, models::ModelId::T, models::ModelId::H1T,
                          models::ModelId::H3, models::ModelId::PE}) {
        config.model_id = id;
        const auto gen = simlab::generate_dataset(config, 60);
        const auto fitted = fit::fit_model(gen.dataset, id);
        const auto j = io::model_to_json(fitted.model);
        const auto back = io::model_from_json(j, "test");
        INFO(models::to_string(id));
        CHECK(back == fitted.model);
        CHECK(io::model_to_json(back).dump(2) == j.dump(2));
    }
}

TEST_CASE("model JSON enforces arity") {
    io::ordered_json j;
    j["model_id"] = "T";
    j["parameters"] = io::ordered_json::array();
    CHECK_THROWS_AS(io::model_from_json(j, "test"), DataError);
}

TEST_CASE("key=value config parsing") {
    const auto kv = io::parse_keyvalue("# comment\nmodel = FS\nrows=96\n\n  seed =  7\n", "cfg");
    CHECK(kv.at("model") == "FS");
    CHECK(kv.at("rows") == "96");
    CHECK(kv.at("seed") == "7");
    CHECK_THROWS_AS(io::parse_keyvalue("novalue\n", "cfg"), DataError);
}

TEST_CASE("dataset digest is a stable content fingerprint") {
    CHECK(io::dataset_digest("abc") == io::dataset_digest("abc"));
    CHECK(io::dataset_digest("abc") != io::dataset_digest("abd"));
    CHECK(io::dataset_digest("abc").size() == 16);
}

TEST_CASE("attach_features joins by stream id") {
    simlab::GeneratorConfig config;
    config.model_id = models::ModelId::FS;
    config.seed = 11;
    auto gen = simlab::generate_dataset(config, 24);
    std::vector<std::pair<std::string, features::FeatureVector>> rows;
    for (const auto& row : gen.dataset.rows) rows.emplace_back(row.stream_id, *row.features);
    const auto matrix =
        io::read_features_matrix(io::write_features_matrix(rows, features::FeatureKind::FS), "m");

    auto stripped = gen.dataset;
    for (auto& row : stripped.rows) row.features.reset();
    io::attach_features(stripped, matrix);
    for (std::size_t i = 0; i < stripped.rows.size(); ++i)
        CHECK(stripped.rows[i].features == gen.dataset.rows[i].features);
}
