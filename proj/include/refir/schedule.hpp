#pragma once

#include <vector>

namespace refir {

// Cosine alpha-bar schedule over T steps. Index 0 is the least noisy step;
// noise level sqrt(1 - alpha_bar[t]) increases strictly with t.
struct NoiseSchedule {
    int total_steps = 0;
    std::vector<float> alpha_bar; // size total_steps, strictly decreasing in t
};

NoiseSchedule make_cosine_schedule(int total_steps);

} // namespace refir
