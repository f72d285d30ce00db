#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "decwatt/models.hpp"
#include "decwatt/random.hpp"

using namespace decwatt;
using namespace decwatt::models;
using features::FeatureKind;
using features::FeatureLabel;

namespace {

BitstreamMeta basic_meta() {
    BitstreamMeta m;
    m.frame_size_s = 416 * 240;
    m.num_frames_n = 4;
    m.frame_rate_f = 50;
    m.qp = 32;
    m.bitrate_b = 1.5e6;
    m.bits_per_pixel = 0.3;
    m.intra_fraction_alpha = 0.25;
    m.decode_time_s = 2.0;
    m.pe = PeCounts{1e8, 1e6};
    m.mem = MemCounts{2e6, 1e6};
    return m;
}

} // namespace

TEST_CASE("linear feature model: single- and two-term sums") {
    features::FeatureVector v(FeatureKind::FS);
    v.at(FeatureLabel::E0) = 1;
    std::vector<double> e(27, 0.0);
    e[0] = 0.4; // E_0 is the first catalogue entry
    CHECK(predict_feature_linear(v, e) == 0.4);

    v.at(FeatureLabel::coeff) = 100;
    const int coeff_idx = features::index_of(FeatureKind::FS, FeatureLabel::coeff);
    e[static_cast<std::size_t>(coeff_idx)] = 0.001;
    CHECK(predict_feature_linear(v, e) == Catch::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("linear feature model equals an independent dot product") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        features::FeatureVector v(FeatureKind::FA);
        std::vector<double> e;
        double expected = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v.counts()[i] = std::floor(rng.uniform(0, 50));
            e.push_back(rng.uniform(-0.01, 0.05));
        }
        for (std::size_t i = 0; i < v.size(); ++i) expected += v.counts()[i] * e[i];
        CHECK(std::abs(predict_feature_linear(v, e) - expected) <= 1e-12 * (1 + std::abs(expected)));
    }
}

TEST_CASE("linear feature model: homogeneity in the counts") {
    Rng rng(6);
    features::FeatureVector v(FeatureKind::FS);
    std::vector<double> e;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.counts()[i] = std::floor(rng.uniform(0, 20));
        e.push_back(rng.uniform(0.0, 0.1));
    }
    const double base = predict_feature_linear(v, e);
    for (const double k : {0.0, 0.5, 2.0, 7.25}) {
        features::FeatureVector kv = v;
        for (auto& c : kv.counts()) c *= k;
        CHECK(predict_feature_linear(kv, e) == Catch::Approx(k * base).margin(1e-12));
    }
}

TEST_CASE("dimension mismatches are rejected") {
    features::FeatureVector fs(FeatureKind::FS);
    std::vector<double> e90(90, 0.1);
    CHECK_THROWS_AS(predict_feature_linear(fs, e90), DataError);

    TrainedModel fa_model;
    fa_model.id = ModelId::FA;
    fa_model.params.assign(90, 0.01);
    CHECK_THROWS_AS(predict(fa_model, basic_meta(), &fs), DataError);
}

TEST_CASE("MARS basis evaluation") {
    BitstreamMeta m = basic_meta();
    const std::vector<HingeTerm> constant{{HingeTerm::Kind::Constant, 0, 0.0, 5.0}};
    m.pe = PeCounts{123, 7};
    CHECK(predict_mars(m, constant) == 5.0);

    const std::vector<HingeTerm> hinge{{HingeTerm::Kind::HingeAbove, 0, 3.0, 2.0}};
    m.pe = PeCounts{5, 0};
    CHECK(predict_mars(m, hinge) == 4.0);
    m.pe = PeCounts{1, 0};
    CHECK(predict_mars(m, hinge) == 0.0);

    m.pe.reset();
    CHECK_THROWS_AS(predict_mars(m, hinge), DataError);
}

TEST_CASE("MARS piecewise model matches direct evaluation at random points") {
    Rng rng(7);
    std::vector<HingeTerm> basis{
        {HingeTerm::Kind::Constant, 0, 0.0, 1.5},
        {HingeTerm::Kind::HingeAbove, 0, 10.0, 0.25},
        {HingeTerm::Kind::HingeBelow, 0, 4.0, -0.5},
        {HingeTerm::Kind::HingeAbove, 1, 2.0, 3.0},
    };
    for (int i = 0; i < 100; ++i) {
        BitstreamMeta m = basic_meta();
        const double x0 = rng.uniform(-20, 30);
        const double x1 = rng.uniform(-5, 10);
        m.pe = PeCounts{x0, x1};
        const double direct = 1.5 + 0.25 * std::max(0.0, x0 - 10.0) - 0.5 * std::max(0.0, 4.0 - x0) +
                              3.0 * std::max(0.0, x1 - 2.0);
        CHECK(predict_mars(m, basis) == Catch::Approx(direct).margin(1e-12));
    }
}

TEST_CASE("RAM model is the weighted access count sum, no idle term") {
    BitstreamMeta m = basic_meta();
    m.mem = MemCounts{0, 0};
    CHECK(predict_ram(m, 0.2, 0.1) == 0.0);
    m.mem = MemCounts{10, 5};
    CHECK(predict_ram(m, 0.2, 0.1) == Catch::Approx(2.5));
    m.mem.reset();
    CHECK_THROWS_AS(predict_ram(m, 0.2, 0.1), DataError);
}

TEST_CASE("time model is affine in the decoding time") {
    BitstreamMeta m = basic_meta();
    m.decode_time_s = 0.0;
    CHECK(predict_time(m, 0.7, 0.5) == 0.7);
    m.decode_time_s = 21.5;
    CHECK(predict_time(m, 0.0, 0.5) == Catch::Approx(10.75));
    // affine: predict(2t) - predict(t) == P_mean * t
    m.decode_time_s = 4.0;
    const double at_t = predict_time(m, 0.3, 0.5);
    m.decode_time_s = 8.0;
    CHECK(predict_time(m, 0.3, 0.5) - at_t == Catch::Approx(0.5 * 4.0));
    m.decode_time_s.reset();
    CHECK_THROWS_AS(predict_time(m, 0.3, 0.5), DataError);
}

TEST_CASE("H1T power law") {
    BitstreamMeta m = basic_meta();
    const Normalizers n{2560.0 * 1600.0, 60.0, 10.0};
    SECTION("zero exponents reduce to P_max times time") {
        CHECK(predict_h1t(m, {2.0, 0, 0, 0}, n) == Catch::Approx(2.0 * 2.0));
    }
    SECTION("unit ratios for any exponents") {
        BitstreamMeta u = m;
        u.frame_size_s = static_cast<std::int64_t>(n.s_max);
        u.frame_rate_f = n.f_max;
        u.qp = 10;
        CHECK(predict_h1t(u, {1.5, 0.7, -0.3, 0.9}, n) == Catch::Approx(1.5 * 2.0));
    }
    SECTION("random parameters against direct substitution") {
        Rng rng(8);
        for (int i = 0; i < 50; ++i) {
            const H1tParams p{rng.uniform(0.1, 3), rng.uniform(-1, 1), rng.uniform(-1, 1),
                              rng.uniform(-1, 1)};
            const double direct = p.p_max *
                                  std::pow(static_cast<double>(m.frame_size_s) / n.s_max, p.c_s) *
                                  std::pow(m.frame_rate_f / n.f_max, p.c_f) *
                                  std::pow(m.qp / n.q_min, p.c_q) * *m.decode_time_s;
            CHECK(predict_h1t(m, p, n) == Catch::Approx(direct).margin(1e-12));
        }
    }
    SECTION("errors") {
        CHECK_THROWS_AS(predict_h1t(m, {1, 0, 0, 0}, {0, 60, 10}), DataError);
        BitstreamMeta no_t = m;
        no_t.decode_time_s.reset();
        CHECK_THROWS_AS(predict_h1t(no_t, {1, 0, 0, 0}, n), DataError);
    }
}

TEST_CASE("H2T bitrate model") {
    BitstreamMeta m = basic_meta();
    const double c[4] = {0.1, 0.2, 0.3, 0.4};
    m.intra_fraction_alpha = 0;
    m.bitrate_b = 0;
    CHECK(predict_h2t(m, c) == Catch::Approx(0.4 * 2.0));
    m.intra_fraction_alpha = 1;
    m.bitrate_b = 1;
    m.decode_time_s = 1;
    CHECK(predict_h2t(m, c) == Catch::Approx(0.1 + 0.2 + 0.3 + 0.4));
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        m = basic_meta();
        m.intra_fraction_alpha = rng.uniform(0, 1);
        m.bitrate_b = rng.uniform(0, 5e7);
        const double direct = (c[0] * m.intra_fraction_alpha * m.bitrate_b +
                               c[1] * m.intra_fraction_alpha + c[2] * m.bitrate_b + c[3]) *
                              *m.decode_time_s;
        CHECK(predict_h2t(m, c) == Catch::Approx(direct).margin(1e-9));
    }
}

TEST_CASE("H2 bits-per-pixel model needs no decoding time") {
    BitstreamMeta m = basic_meta();
    m.decode_time_s.reset();
    const double c[4] = {0.1, 0.2, 0.3, 0.4};
    m.bits_per_pixel = 0;
    m.intra_fraction_alpha = 0;
    m.num_frames_n = 100;
    m.frame_size_s = 1;
    CHECK(predict_h2(m, c) == Catch::Approx(100 * 0.4));
    m.num_frames_n = 1;
    m.frame_size_s = 1;
    m.intra_fraction_alpha = 1;
    m.bits_per_pixel = 1;
    CHECK(predict_h2(m, c) == Catch::Approx(1.0));
    Rng rng(10);
    for (int i = 0; i < 50; ++i) {
        m = basic_meta();
        m.intra_fraction_alpha = rng.uniform(0, 1);
        m.bits_per_pixel = rng.uniform(0, 4);
        const double ns = static_cast<double>(m.num_frames_n) * static_cast<double>(m.frame_size_s);
        const double direct = (c[0] * m.intra_fraction_alpha * m.bits_per_pixel +
                               c[1] * m.intra_fraction_alpha + c[2] * m.bits_per_pixel + c[3]) *
                              ns;
        CHECK(predict_h2(m, c) == Catch::Approx(direct).margin(1e-9));
    }
}

TEST_CASE("H3 power-law model") {
    BitstreamMeta m = basic_meta();
    m.num_frames_n = 100;
    m.frame_size_s = 1;
    SECTION("beta zero drops the power term") {
        CHECK(predict_h3(m, {0.7, 0.01, 0.0, 2.0}) == Catch::Approx(0.7 + 100 * 0.01));
    }
    SECTION("gamma one is affine in bits per pixel") {
        m.bits_per_pixel = 0.5;
        CHECK(predict_h3(m, {0, 0, 1, 1}) == Catch::Approx(100 * 0.5));
        m.bits_per_pixel = 0.25;
        CHECK(predict_h3(m, {0, 0, 1, 1}) == Catch::Approx(100 * 0.25));
    }
    SECTION("domain errors") {
        m.bits_per_pixel = -0.1;
        CHECK_THROWS_AS(predict_h3(m, {0, 0, 1, 1}), NumericError);
        m.bits_per_pixel = 0;
        CHECK_THROWS_AS(predict_h3(m, {0, 0, 1, -1}), NumericError);
        CHECK(predict_h3(m, {0, 0, 1, 0}) == Catch::Approx(100.0)); // 0^0 == 1
    }
}

TEST_CASE("H2 equals H2T under the documented substitution with c1=c2=0") {
    // with b = b_pixel*S*f and t_dec = N/f:
    //   H2T(0,0,c3,c4)  = c3*b_pixel*S*N + c4*N/f
    //   H2 (0,0,c3,c4') = c3*b_pixel*N*S + c4'*N*S
    // equal iff c4' = c4/(S*f)
    BitstreamMeta m = basic_meta();
    const double s = static_cast<double>(m.frame_size_s);
    m.bitrate_b = m.bits_per_pixel * s * m.frame_rate_f;
    m.decode_time_s = m.num_frames_n / m.frame_rate_f;
    const double c3 = 2.5e-7, c4 = 0.35;
    const double h2t_c[4] = {0, 0, c3, c4};
    const double h2_c[4] = {0, 0, c3, c4 / (s * m.frame_rate_f)};
    CHECK(predict_h2t(m, h2t_c) ==
          Catch::Approx(predict_h2(m, h2_c)).epsilon(1e-12));
}

TEST_CASE("parameter arity table") {
    CHECK(parameter_count(ModelId::FA) == 90);
    CHECK(parameter_count(ModelId::FS) == 27);
    CHECK(parameter_count(ModelId::PE) == -1);
    CHECK(parameter_count(ModelId::M) == 2);
    CHECK(parameter_count(ModelId::T) == 2);
    CHECK(parameter_count(ModelId::H1T) == 7);
    CHECK(parameter_count(ModelId::H2T) == 4);
    CHECK(parameter_count(ModelId::H2) == 4);
    CHECK(parameter_count(ModelId::H3) == 4);
    for (ModelId id : {ModelId::FA, ModelId::FS, ModelId::M, ModelId::T, ModelId::H1T, ModelId::H2T,
                       ModelId::H2, ModelId::H3})
        CHECK(static_cast<int>(parameter_names(id).size()) == parameter_count(id));
}

TEST_CASE("variable requirements per model") {
    CHECK(variables_required(ModelId::FS).variables.size() == 27);
    CHECK_FALSE(variables_required(ModelId::FS).execution_required);
    CHECK(variables_required(ModelId::FA).variables.size() == 90);
    CHECK_FALSE(variables_required(ModelId::FA).execution_required);
    CHECK(variables_required(ModelId::T).variables == std::vector<std::string>{"t_dec"});
    CHECK(variables_required(ModelId::T).execution_required);
    CHECK(variables_required(ModelId::H3).variables ==
          std::vector<std::string>{"b_pixel", "N", "S"});
    CHECK_FALSE(variables_required(ModelId::H3).execution_required);
    for (ModelId id : {ModelId::PE, ModelId::M, ModelId::T, ModelId::H1T, ModelId::H2T})
        CHECK(variables_required(id).execution_required);
    for (ModelId id : {ModelId::FA, ModelId::FS, ModelId::H2, ModelId::H3})
        CHECK_FALSE(variables_required(id).execution_required);
    CHECK(variables_required(ModelId::H1T).variables.size() == 4);
    CHECK(variables_required(ModelId::H2T).variables.size() == 3);
    CHECK(variables_required(ModelId::H2).variables.size() == 4);
}

TEST_CASE("predictors are deterministic") {
    const BitstreamMeta m = basic_meta();
    const double c[4] = {1e-8, 0.1, 2e-8, 0.2};
    CHECK(predict_h2t(m, c) == predict_h2t(m, c));
    CHECK(predict_h3(m, {0.1, 1e-7, 2e-7, 0.9}) == predict_h3(m, {0.1, 1e-7, 2e-7, 0.9}));
}
