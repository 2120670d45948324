// Forecast one day of an hourly sine with each inference mode.
//   sample_forecast_sine [checkpoint-dir]
// Without a checkpoint the model runs on freshly initialised weights.

#include <cmath>
#include <iostream>

#include "m4c/checkpoint.hpp"
#include "m4c/eval.hpp"
#include "m4c/inference.hpp"

int main(int argc, char** argv) {
    using namespace m4c;
    Model<float> model;
    if (argc > 1) {
        const auto ck = load_checkpoint(argv[1]);
        model = Model<float>(ck.config, ck.params);
    } else {
        model = Model<float>(ModelConfig::desk(), init_params<float>(ModelConfig::desk(), 0));
        std::cout << "(untrained weights; pass a checkpoint directory for real forecasts)\n";
    }

    TimeSeries s{parse_timestamp("2024-05-06 00:00:00"), parse_frequency("1H"), {}};
    for (int t = 0; t < 24 * 14 + 24; ++t) s.values.push_back(20 + 5 * std::sin(2 * M_PI * t / 24.0));
    const std::vector<double> future(s.values.end() - 24, s.values.end());
    s.values.resize(s.values.size() - 24);

    for (auto mode : {ForecastMode::multipoint, ForecastMode::autoregressive, ForecastMode::ensemble}) {
        model.reset_forward_calls();
        const auto f = forecast(model, ForecastRequest{s, 24, mode, kDefaultContextCap, 1});
        std::cout << to_string(mode) << ": " << model.forward_calls() << " forward pass(es), " << f.elapsed_ms
                  << " ms, MASE(m=1) " << mase(f.values, future, s.values, 1).value << "\n  ";
        for (std::size_t h = 0; h < f.values.size(); h += 6) std::cout << format_timestamp(f.timestamps[h]) << " " << f.values[h] << "  ";
        std::cout << '\n';
    }
}
