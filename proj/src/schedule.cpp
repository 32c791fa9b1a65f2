#include "refir/schedule.hpp"
#include "refir/errors.hpp"

#include <cmath>

namespace refir {

NoiseSchedule make_cosine_schedule(int total_steps) {
    if (total_steps < 2)
        throw Error(ErrorCode::Usage, "schedule needs at least 2 steps");
    NoiseSchedule s;
    s.total_steps = total_steps;
    s.alpha_bar.resize(total_steps);
    const double offset = 0.008;
    auto f = [&](double t) {
        double v = std::cos((t / total_steps + offset) / (1.0 + offset) * M_PI / 2.0);
        return v * v;
    };
    double f0 = f(0.0);
    for (int t = 0; t < total_steps; ++t) {
        // alpha_bar at the *end* of step t+1, normalized so f(0) -> 1
        double ab = f(t + 1.0) / f0;
        s.alpha_bar[t] = static_cast<float>(std::min(std::max(ab, 1e-5), 0.9999));
    }
    return s;
}

} // namespace refir
