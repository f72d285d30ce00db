// End-to-end library walkthrough: synthesize a measured dataset from a hidden
// FS model, cross-validate, then fit on everything and score one stream.

#include <cstdio>

#include "decwatt/eval.hpp"
#include "decwatt/fit.hpp"
#include "decwatt/simlab.hpp"

int main() {
    using namespace decwatt;

    simlab::GeneratorConfig config;
    config.model_id = models::ModelId::FS;
    config.seed = 2024;
    config.noise_rel_sigma = 0.03;
    const auto generated = simlab::generate_dataset(config, 480);
    std::printf("generated %zu bit streams (hidden FS model, 3%% measurement noise)\n",
                generated.dataset.rows.size());

    const auto cv = eval::cross_validate(generated.dataset, models::ModelId::FS, /*seed=*/42);
    std::printf("10-fold CV mean |relative error|: %s%%\n",
                eval::format_percent(cv.mean_abs_error).c_str());

    const auto fitted = fit::fit_model(generated.dataset, models::ModelId::FS);
    const auto& row = generated.dataset.rows.front();
    const double estimate = models::predict(fitted.model, row.meta, &*row.features);
    std::printf("%s: measured %.4g J, estimated %.4g J\n", row.stream_id.c_str(), row.energy_j,
                estimate);
    return 0;
}
