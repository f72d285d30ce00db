#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "decwatt/eval.hpp"
#include "decwatt/io.hpp"
#include "decwatt/simlab.hpp"

using namespace decwatt;
using namespace decwatt::eval;
using models::ModelId;

TEST_CASE("relative error is signed and needs a positive measurement") {
    CHECK(relative_error(1.1, 1.0) == Catch::Approx(0.1));
    CHECK(relative_error(0.9, 1.0) == Catch::Approx(-0.1));
    CHECK(relative_error(7.25, 7.25) == 0.0);
    CHECK_THROWS_AS(relative_error(1.0, 0.0), DataError);
    CHECK_THROWS_AS(relative_error(1.0, -2.0), DataError);
}

TEST_CASE("mean absolute error") {
    CHECK(mean_abs_error(std::vector<double>{0.1, -0.1}) == Catch::Approx(0.1));
    CHECK(mean_abs_error(std::vector<double>{0.0}) == 0.0);
    CHECK_THROWS_AS(mean_abs_error(std::vector<double>{}), DataError);

    Rng rng(1);
    std::vector<double> errors;
    for (int i = 0; i < 100; ++i) errors.push_back(rng.uniform(-1, 1));
    double acc = 0;
    for (double e : errors) acc += e < 0 ? -e : e;
    CHECK(mean_abs_error(errors) == Catch::Approx(acc / 100.0).margin(1e-15));

    // invariant under sign flips
    auto flipped = errors;
    for (std::size_t i = 0; i < flipped.size(); i += 2) flipped[i] = -flipped[i];
    CHECK(mean_abs_error(flipped) == Catch::Approx(mean_abs_error(errors)).margin(1e-15));
}

TEST_CASE("cross-validation on a noiseless synthetic is exact") {
    simlab::GeneratorConfig config;
    config.model_id = ModelId::FS;
    config.seed = 50;
    const auto gen = simlab::generate_dataset(config, 120);
    const auto report = cross_validate(gen.dataset, ModelId::FS, 7);
    CHECK(report.mean_abs_error < 1e-6);
}

TEST_CASE("cross-validation is deterministic in the seed and partitions the rows") {
    simlab::GeneratorConfig config;
    config.model_id = ModelId::T;
    config.seed = 51;
    config.noise_rel_sigma = 0.05;
    const auto gen = simlab::generate_dataset(config, 75);

    const auto a = cross_validate(gen.dataset, ModelId::T, 42);
    const auto b = cross_validate(gen.dataset, ModelId::T, 42);
    CHECK(a.fold_assignment == b.fold_assignment);
    CHECK(a.per_fold_errors == b.per_fold_errors);
    CHECK(a.mean_abs_error == b.mean_abs_error);

    const auto c = cross_validate(gen.dataset, ModelId::T, 43);
    CHECK(a.fold_assignment != c.fold_assignment);

    // partition: every row exactly once, fold sizes differ by at most one
    std::size_t total = 0;
    std::size_t min_size = gen.dataset.rows.size(), max_size = 0;
    for (const auto& fold : a.per_fold_errors) {
        total += fold.size();
        min_size = std::min(min_size, fold.size());
        max_size = std::max(max_size, fold.size());
    }
    CHECK(total == gen.dataset.rows.size());
    CHECK(max_size - min_size <= 1);
    CHECK(a.fold_assignment.size() == gen.dataset.rows.size());
}

TEST_CASE("cross-validation refuses undersized datasets") {
    simlab::GeneratorConfig config;
    config.model_id = ModelId::T;
    config.seed = 52;
    const auto gen = simlab::generate_dataset(config, 8);
    CHECK_THROWS_AS(cross_validate(gen.dataset, ModelId::T, 1, 10), DataError);
}

TEST_CASE("frame-level differencing subtracts group neighbours") {
    fit::Dataset data;
    for (int n = 1; n <= 2; ++n) {
        fit::DatasetRow row;
        row.stream_id = "s_f" + std::to_string(n);
        row.group = {"s", "lowdelay", 32};
        row.frame_count = n;
        row.meta.num_frames_n = n;
        row.meta.frame_size_s = 100;
        row.meta.frame_rate_f = 50;
        row.meta.qp = 32;
        row.meta.bits_per_pixel = 0.5;
        row.meta.intra_fraction_alpha = 1.0 / n;
        row.meta.decode_time_s = 1.5 * n;
        row.energy_j = n == 1 ? 10.0 : 18.0;
        data.rows.push_back(row);
    }
    const auto out = frame_level_energies(data);
    REQUIRE(out.dataset.rows.size() == 2);
    CHECK(out.dataset.rows[0].energy_j == 10.0); // pass-through
    CHECK(out.dataset.rows[1].energy_j == Catch::Approx(8.0));
    CHECK(out.dataset.rows[1].meta.num_frames_n == 1);
    CHECK(*out.dataset.rows[1].meta.decode_time_s == Catch::Approx(1.5));
    CHECK(out.dataset.rows[1].meta.intra_fraction_alpha == Catch::Approx(0.0).margin(1e-12));
    CHECK(out.dataset.rows[1].meta.bits_per_pixel == Catch::Approx(0.5));
    CHECK(out.dropped_nonpositive == 0);
}

TEST_CASE("frame-level differencing validates group structure") {
    fit::Dataset gap;
    for (int n : {1, 3}) {
        fit::DatasetRow row;
        row.stream_id = "g_f" + std::to_string(n);
        row.group = {"g", "intra", 10};
        row.frame_count = n;
        row.energy_j = n;
        gap.rows.push_back(row);
    }
    CHECK_THROWS_AS(frame_level_energies(gap), DataError);

    fit::Dataset missing;
    fit::DatasetRow row;
    row.stream_id = "m";
    row.group = {"m", "intra", 10};
    row.frame_count = 0;
    row.energy_j = 1;
    missing.rows.push_back(row);
    CHECK_THROWS_AS(frame_level_energies(missing), DataError);
}

TEST_CASE("non-positive differenced energies are dropped, not fatal") {
    fit::Dataset data;
    for (int n = 1; n <= 3; ++n) {
        fit::DatasetRow row;
        row.stream_id = "d_f" + std::to_string(n);
        row.group = {"d", "lowdelay", 32};
        row.frame_count = n;
        row.meta.num_frames_n = n;
        row.meta.frame_size_s = 100;
        row.energy_j = n == 2 ? 5.0 : n == 1 ? 6.0 : 7.0; // dip at n=2
        data.rows.push_back(row);
    }
    const auto out = frame_level_energies(data);
    CHECK(out.dropped_nonpositive == 1);
    REQUIRE(out.dataset.rows.size() == 2); // frame 1 + frame 3 delta
}

TEST_CASE("noiseless linear data: frame-level CV equals sequence-level CV at zero") {
    simlab::GeneratorConfig config;
    config.model_id = ModelId::FS;
    config.seed = 53;
    const auto gen = simlab::generate_dataset(config, 160);
    const auto seq = cross_validate(gen.dataset, ModelId::FS, 11);
    const auto diff = frame_level_energies(gen.dataset);
    CHECK(diff.dropped_nonpositive == 0);
    CHECK(diff.negative_feature_deltas == 0);
    const auto frame = cross_validate(diff.dataset, ModelId::FS, 11);
    CHECK(seq.mean_abs_error < 1e-6);
    CHECK(frame.mean_abs_error < 1e-6);
}

TEST_CASE("with noise, frame-level errors exceed sequence-level errors") {
    simlab::GeneratorConfig config;
    config.model_id = ModelId::FS;
    config.seed = 54;
    config.noise_rel_sigma = 0.03;
    const auto gen = simlab::generate_dataset(config, 480);
    const auto seq = cross_validate(gen.dataset, ModelId::FS, 11);
    const auto diff = frame_level_energies(gen.dataset);
    const auto frame = cross_validate(diff.dataset, ModelId::FS, 11);
    CHECK(frame.mean_abs_error > seq.mean_abs_error);
}

TEST_CASE("report rendering: single cell and row means") {
    const std::vector<ReportCell> one{{"(a)", ModelId::FS, 0.0627}};
    const auto text = render_report_text(one);
    CHECK(text.find("6.27%") != std::string::npos);

    const std::vector<ReportCell> row{{"(a)", ModelId::FA, 0.0621}, {"(a)", ModelId::FS, 0.0627}};
    const auto text2 = render_report_text(row);
    CHECK(text2.find("6.24%") != std::string::npos); // row mean

    const auto csv = render_report_csv(row);
    CHECK(csv == "system,model,mean_abs_error_percent\n(a),FA,6.21\n(a),FS,6.27\n");
}

TEST_CASE("report layout matches the reviewed fixture") {
    const std::vector<ReportCell> cells{
        {"(a)", ModelId::FA, 0.0621},
        {"(a)", ModelId::FS, 0.0627},
        {"(b)", ModelId::FS, 0.0449},
    };
    const auto got = render_report_text(cells);
    const auto want = io::read_file(std::string(DECWATT_TEST_DATA_DIR) + "/report_golden.txt");
    CHECK(got == want);
}
