#ifndef LLMO_REWARDS_HPP
#define LLMO_REWARDS_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/grid.hpp"
#include "llmo/population.hpp"
#include "llmo/rng.hpp"

namespace llmo {

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

using ComplexMatrix = std::vector<std::vector<std::complex<double>>>;

inline ComplexMatrix rayleigh_channels(std::size_t rows, std::size_t cols, Rng& rng) {
    ComplexMatrix h(rows, std::vector<std::complex<double>>(cols));
    for (auto& row : h)
        for (auto& v : row) v = rng.complex_gaussian();
    return h;
}

// D transmitter-receiver pairs on a shared band. gain[s][d] is the power
// gain from transmitter s to receiver d; actions are per-link transmit
// fractions in [0, 1]. Rates are natural-log spectral efficiencies.
struct IfcModel {
    std::vector<std::vector<double>> gain;
    double p_tx = 10.0;
    double p_fix = 1.0;

    std::size_t links() const { return gain.size(); }

    static IfcModel from_gains(std::vector<std::vector<double>> g) {
        IfcModel m;
        m.gain = std::move(g);
        for (const auto& row : m.gain)
            if (row.size() != m.gain.size())
                throw ValidationError("interference gains must be square");
        return m;
    }

    static IfcModel rayleigh(std::size_t D, std::uint64_t seed) {
        Rng rng(seed);
        const ComplexMatrix h = rayleigh_channels(D, D, rng);
        std::vector<std::vector<double>> g(D, std::vector<double>(D));
        for (std::size_t s = 0; s < D; ++s)
            for (std::size_t d = 0; d < D; ++d) g[s][d] = std::norm(h[s][d]);
        return from_gains(std::move(g));
    }
};

inline void check_unit_box(const std::vector<double>& x, std::size_t D) {
    if (x.size() != D) throw BoundsError("action has wrong dimension");
    for (double v : x)
        if (!(v >= 0.0 && v <= 1.0) || !std::isfinite(v))
            throw BoundsError("transmit fraction outside [0, 1]");
}

inline std::vector<double> ifc_rates(const IfcModel& m, const std::vector<double>& x) {
    const std::size_t D = m.links();
    check_unit_box(x, D);
    std::vector<double> f(D);
    for (std::size_t d = 0; d < D; ++d) {
        double interference = 0.0;
        for (std::size_t s = 0; s < D; ++s)
            if (s != d) interference += m.gain[s][d] * x[s];
        f[d] = std::log(1.0 + m.p_tx * m.gain[d][d] * x[d] / (1.0 + m.p_tx * interference));
    }
    return f;
}

inline double ifc_se(const IfcModel& m, const std::vector<double>& x) {
    double sum = 0.0;
    for (double f : ifc_rates(m, x)) sum += f;
    return sum;
}

// Sum of per-link rate-to-power ratios.
inline double ifc_ee(const IfcModel& m, const std::vector<double>& x) {
    const auto f = ifc_rates(m, x);
    double sum = 0.0;
    for (std::size_t d = 0; d < m.links(); ++d)
        sum += f[d] / (m.p_fix + m.p_tx * x[d]);
    return sum;
}

// Single transmitter serving D users; x is the per-user share of the power
// budget, feasible when the shares sum to at most one.
struct BcModel {
    std::vector<double> gain;
    double p_tx = 10.0;
    double penalty = -1000.0;

    std::size_t users() const { return gain.size(); }

    static BcModel from_gains(std::vector<double> g) {
        BcModel m;
        m.gain = std::move(g);
        return m;
    }

    static BcModel rayleigh(std::size_t D, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<double> g(D);
        for (auto& v : g) v = std::norm(rng.complex_gaussian());
        return from_gains(std::move(g));
    }
};

inline double bc_se(const BcModel& m, const std::vector<double>& x) {
    const std::size_t D = m.users();
    check_unit_box(x, D);
    double total = 0.0;
    for (double v : x) total += v;
    double se = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        const double other = total - x[d];
        se += std::log(1.0 + m.p_tx * m.gain[d] * x[d] / (1.0 + m.p_tx * m.gain[d] * other));
    }
    return se;
}

inline double sum_power_violation(const std::vector<double>& x) {
    double total = 0.0;
    for (double v : x) total += v;
    return std::max(0.0, total - 1.0);
}

// Penalty formulation: infeasible allocations earn a flat penalty so a
// black-box search learns the constraint from rewards alone.
inline double bc_penalized(const BcModel& m, const std::vector<double>& x) {
    if (sum_power_violation(x) > 0.0) return m.penalty;
    return bc_se(m, x);
}

// Downlink cell with M antennas, K users, and transmit power p_dbm, under
// matched-filter beams on noisy channel estimates. The pilot overhead
// prefactor (1 - K/C) and the estimate shrinkage are the standard
// closed-form stand-ins; the power model g() is an affine load model plus a
// rate-proportional term. Energy efficiency is a seeded Monte-Carlo average
// over channel draws, so equal inputs give equal outputs.
struct MmimoModel {
    std::size_t m_max = 256;
    std::size_t k_max = 256;
    double p_min_dbm = 0.0;
    double p_max_dbm = 50.0;
    std::size_t coherence_block = 1800;
    double sigma2_dbm = -96.0;
    double p_ul_dbm = 23.0;
    double p0 = 18.0;
    double c_m = 1.0;
    double c_k = 0.1;
    double c_p = 1.0 / 0.39;
    double c_r = 1.15;
    std::size_t samples = 100;
    std::uint64_t seed = 1;
};

inline double mmimo_ee(const MmimoModel& model, std::size_t M, std::size_t K,
                       double p_dbm) {
    if (K > model.coherence_block)
        throw ModelError("users exceed the coherence block");
    if (M < 1 || M > model.m_max || K < 1 || K > model.k_max || K > M ||
        p_dbm < model.p_min_dbm || p_dbm > model.p_max_dbm)
        throw BoundsError("massive-MIMO configuration outside bounds");

    const double sigma2 = dbm_to_watt(model.sigma2_dbm);
    const double p = dbm_to_watt(p_dbm);
    const double p_ul = dbm_to_watt(model.p_ul_dbm);
    const double kp = static_cast<double>(K) * p_ul;
    const double rho = kp / (kp + sigma2);
    const double est_noise = std::sqrt(sigma2 / kp);
    const double prefactor =
        1.0 - static_cast<double>(K) / static_cast<double>(model.coherence_block);

    Rng rng(model.seed);
    double acc = 0.0;
    std::vector<std::vector<std::complex<double>>> h(K), hhat(K);
    std::vector<double> hat_norm2(K);
    for (std::size_t n = 0; n < model.samples; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
            h[k].resize(M);
            hhat[k].resize(M);
            double norm2 = 0.0;
            for (std::size_t a = 0; a < M; ++a) {
                h[k][a] = rng.complex_gaussian();
                const std::complex<double> e = est_noise * rng.complex_gaussian();
                hhat[k][a] = rho * (h[k][a] + e);
                norm2 += std::norm(hhat[k][a]);
            }
            hat_norm2[k] = norm2;
        }
        double sum_rate = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double desired = 0.0, interference = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                std::complex<double> dot{0.0, 0.0};
                for (std::size_t a = 0; a < M; ++a) dot += std::conj(h[k][a]) * hhat[j][a];
                const double beam_gain = std::norm(dot) / hat_norm2[j];
                if (j == k)
                    desired = beam_gain;
                else
                    interference += beam_gain;
            }
            const double share = p / static_cast<double>(K);
            sum_rate += prefactor *
                        std::log(1.0 + share * desired / (sigma2 + share * interference));
        }
        const double consumed = model.p0 + model.c_m * static_cast<double>(M) +
                                model.c_k * static_cast<double>(K) + model.c_p * p +
                                model.c_r * sum_rate;
        acc += sum_rate / consumed;
    }
    return acc / static_cast<double>(model.samples);
}

// Exhaustive tabulation of a reward over a finite action grid, with the full
// argmax set. This is the oracle the optimizer runs are judged against.
struct RewardTable {
    GridSpec grid;  // P = 1; one cell per action
    std::vector<double> values;
    std::vector<std::uint64_t> argmax;
    double best = 0.0;

    ActionVector point_at(std::uint64_t id) const { return grid.action_at(id); }
};

inline RewardTable grid_reward_table(
    const std::function<double(const ActionVector&)>& reward, const Bounds& bounds,
    const std::vector<std::size_t>& levels, std::uint64_t cap = 1000000) {
    GridSpec grid;
    grid.levels = levels;
    grid.bounds = bounds;
    grid.P = 1;
    grid.validate();
    const std::uint64_t n = grid.action_count();
    if (n > cap) throw CapacityError("reward table larger than the configured cap");
    RewardTable table;
    table.grid = grid;
    table.values.reserve(n);
    for (std::uint64_t id = 0; id < n; ++id) {
        const double r = reward(grid.action_at(id));
        if (!std::isfinite(r)) throw ModelError("reward model produced a non-finite value");
        table.values.push_back(r);
    }
    table.best = table.values[0];
    for (double v : table.values) table.best = std::max(table.best, v);
    for (std::uint64_t id = 0; id < n; ++id)
        if (table.values[id] == table.best) table.argmax.push_back(id);
    return table;
}

}  // namespace llmo

#endif
