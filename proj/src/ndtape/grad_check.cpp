#include "veegan/grad_check.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace veegan::nd {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x, std::size_t coord) {
    Tape tape;
    Var in = tape.leaf(x);
    double v = f(tape, in).item();
    if (!std::isfinite(v)) {
        throw NonFiniteError("grad_check: non-finite value while probing coordinate " + std::to_string(coord));
    }
    return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& at, double step) {
    if (!(step > 0)) throw std::invalid_argument("grad_check: step must be positive");

    Tensor analytic;
    {
        Tape tape;
        Var in = tape.leaf(at);
        Var out = f(tape, in);
        std::array<Var, 1> wrt{in};
        analytic = tape.gradients(out, wrt)[0];
    }

    double worst = 0.0;
    Tensor probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = evaluate(f, probe, i);
        probe[i] = orig - step;
        const double down = evaluate(f, probe, i);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

}  // namespace veegan::nd
