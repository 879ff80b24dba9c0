// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace popi {

/// Linear warmup followed by cosine decay to zero at `total_steps`.
inline double lr_schedule_factor(int step, int total_steps, int warmup_steps) {
    if (warmup_steps > 0 && step < warmup_steps)
        return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const int decay_span = std::max(1, total_steps - warmup_steps);
    const int into = std::clamp(step - warmup_steps, 0, decay_span);
    return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(into) /
                                 static_cast<double>(decay_span)));
}

}  // namespace popi
