#ifndef LLMO_GRID_HPP
#define LLMO_GRID_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/population.hpp"

namespace llmo {

// Finite action grid: each dimension d carries levels[d] evenly spaced
// values across its bounds, and a population of P rows is one state of the
// induced finite space. Encode/decode use a mixed-radix scheme with row 0,
// dimension 0 as the most significant digit.
struct GridSpec {
    std::vector<std::size_t> levels;
    Bounds bounds;
    std::size_t P = 1;

    static GridSpec uniform(std::size_t G, std::size_t D, std::size_t P,
                            const Bounds& bounds) {
        GridSpec g;
        g.levels.assign(D, G);
        g.bounds = bounds;
        g.P = P;
        g.validate();
        return g;
    }

    std::size_t dims() const { return levels.size(); }

    void validate() const {
        bounds.validate();
        if (levels.empty() || levels.size() != bounds.dims())
            throw ValidationError("grid: levels must match bounds dimension");
        for (std::size_t g : levels)
            if (g < 1) throw ValidationError("grid: every dimension needs at least one level");
        if (P < 1) throw ValidationError("grid: population size must be positive");
    }

    double value_at(std::size_t dim, std::size_t level) const {
        const std::size_t G = levels[dim];
        if (level >= G) throw ValidationError("grid: level out of range");
        if (G == 1) return bounds.lo[dim];
        return bounds.lo[dim] +
               static_cast<double>(level) * (bounds.hi[dim] - bounds.lo[dim]) /
                   static_cast<double>(G - 1);
    }

    std::size_t level_of(std::size_t dim, double value) const {
        const std::size_t G = levels[dim];
        if (G == 1) {
            if (std::abs(value - bounds.lo[dim]) > 1e-9)
                throw ValidationError("grid: value off the single-level grid");
            return 0;
        }
        const double span = bounds.hi[dim] - bounds.lo[dim];
        const double raw = (value - bounds.lo[dim]) / span * static_cast<double>(G - 1);
        const long l = std::lround(raw);
        if (l < 0 || static_cast<std::size_t>(l) >= G ||
            std::abs(value - value_at(dim, static_cast<std::size_t>(l))) >
                1e-9 * std::max(1.0, std::abs(value)))
            throw ValidationError("grid: value off the grid");
        return static_cast<std::size_t>(l);
    }

    // Number of distinct actions; throws once the count leaves uint64 range.
    std::uint64_t action_count() const {
        std::uint64_t n = 1;
        for (std::size_t g : levels) {
            if (g != 0 && n > (~std::uint64_t{0}) / g)
                throw CapacityError("grid: action count overflows");
            n *= g;
        }
        return n;
    }

    std::uint64_t state_count() const {
        const std::uint64_t m = action_count();
        std::uint64_t n = 1;
        for (std::size_t p = 0; p < P; ++p) {
            if (m != 0 && n > (~std::uint64_t{0}) / m)
                throw CapacityError("grid: state count overflows");
            n *= m;
        }
        return n;
    }

    std::uint64_t encode_action_levels(const std::vector<std::size_t>& lvl) const {
        if (lvl.size() != dims()) throw ValidationError("grid: level tuple dimension");
        std::uint64_t id = 0;
        for (std::size_t d = 0; d < dims(); ++d) {
            if (lvl[d] >= levels[d]) throw ValidationError("grid: level out of range");
            id = id * levels[d] + lvl[d];
        }
        return id;
    }

    std::vector<std::size_t> decode_action_levels(std::uint64_t id) const {
        std::vector<std::size_t> lvl(dims(), 0);
        for (std::size_t d = dims(); d-- > 0;) {
            lvl[d] = static_cast<std::size_t>(id % levels[d]);
            id /= levels[d];
        }
        if (id != 0) throw ValidationError("grid: action id out of range");
        return lvl;
    }

    ActionVector action_at(std::uint64_t id) const {
        const auto lvl = decode_action_levels(id);
        std::vector<double> v(dims());
        for (std::size_t d = 0; d < dims(); ++d) v[d] = value_at(d, lvl[d]);
        return ActionVector{std::move(v)};
    }

    std::uint64_t encode_action(const ActionVector& a) const {
        if (a.dims() != dims()) throw ValidationError("grid: action dimension");
        std::vector<std::size_t> lvl(dims());
        for (std::size_t d = 0; d < dims(); ++d) lvl[d] = level_of(d, a.values[d]);
        return encode_action_levels(lvl);
    }

    std::uint64_t encode_state(const Population& pop) const {
        if (pop.size() != P) throw ValidationError("grid: population size mismatch");
        const std::uint64_t m = action_count();
        std::uint64_t id = 0;
        for (std::size_t p = 0; p < P; ++p) id = id * m + encode_action(pop.actions[p]);
        return id;
    }

    std::vector<std::uint64_t> decode_state_actions(std::uint64_t id) const {
        const std::uint64_t m = action_count();
        std::vector<std::uint64_t> out(P, 0);
        for (std::size_t p = P; p-- > 0;) {
            out[p] = id % m;
            id /= m;
        }
        if (id != 0) throw ValidationError("grid: state id out of range");
        return out;
    }

    Population decode_state(std::uint64_t id) const {
        Population pop;
        pop.actions.reserve(P);
        for (std::uint64_t aid : decode_state_actions(id)) pop.actions.push_back(action_at(aid));
        return pop;
    }
};

}  // namespace llmo

#endif
