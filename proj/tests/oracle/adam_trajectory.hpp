#pragma once

// Iterates of scalar Adam on f(theta) = (theta - 0.25)^2 from theta = 1,
// lr 0.1, betas (0.9, 0.999), eps 1e-8, L2 decay 0.01, produced in 64-bit by
// tests/oracles/adam_reference.py and frozen here.

#include <array>

namespace oracle {

inline constexpr double kAdamLr = 0.1;
inline constexpr double kAdamDecay = 0.01;
inline constexpr double kAdamTarget = 0.25;

inline constexpr std::array<double, 10> kAdamTrajectory{
    0.9000000006622516,  0.8006240300909228, 0.7024502203911421, 0.6062133752673927, 0.5128314438261876,
    0.42342120019076035, 0.339289298909204,  0.2618817565799943, 0.19267917066359447, 0.13304171883483962,
};

}  // namespace oracle
