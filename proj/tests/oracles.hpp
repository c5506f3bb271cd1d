// Independent reference computations shared by the unit and acceptance tests.
#ifndef TGATE_TESTS_ORACLES_HPP
#define TGATE_TESTS_ORACLES_HPP

#include <cstdint>
#include <random>

#include "tgate/dynamics.hpp"
#include "tgate/qcore.hpp"

namespace oracle {

/// Constant-envelope drive written out in the textbook form
///   H = (eta Omega/2) e^{i phi} (a^+ e^{-i(dm+dg-S)t} + a e^{i(dm-dg+S)t}) (s+_1 - s+_2) + h.c.
struct ConstantDrive {
    double delta_m = 0.0;
    double delta_g = 0.0;
    double stark = 0.0;
    double eta = 0.042;
    double omega = 0.0;
    double spin_phase = 0.0;
    double tau = 0.0;
};

/// Exponential-midpoint stepping with step dt; each exp(-i H dt) is applied
/// to the state by a truncated Taylor series.
tgate::Vector brute_force(const tgate::OperatorSet &ops, const ConstantDrive &d,
                          const tgate::Vector &psi0, double dt);

/// Random draw used by the oracle-equivalence checks.
ConstantDrive random_drive(std::mt19937_64 &rng, double tau);

/// Bit-reproducible random normalized state.
tgate::Vector random_state(const tgate::HilbertSpec &spec, std::mt19937_64 &rng);

tgate::GateParams gate_params(const ConstantDrive &d);
tgate::EnvelopeSet envelopes(const ConstantDrive &d);

}  // namespace oracle

#endif
