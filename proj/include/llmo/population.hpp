#ifndef LLMO_POPULATION_HPP
#define LLMO_POPULATION_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "llmo/errors.hpp"

namespace llmo {

struct Bounds {
    std::vector<double> lo;
    std::vector<double> hi;

    static Bounds uniform(std::size_t dims, double l, double h) {
        Bounds b;
        b.lo.assign(dims, l);
        b.hi.assign(dims, h);
        b.validate();
        return b;
    }

    std::size_t dims() const { return lo.size(); }

    void validate() const {
        if (lo.empty() || lo.size() != hi.size())
            throw ValidationError("bounds: empty or mismatched dimension lists");
        for (std::size_t d = 0; d < lo.size(); ++d)
            if (!(lo[d] < hi[d]))
                throw ValidationError("bounds: lower bound must be below upper bound");
    }

    bool contains(const std::vector<double>& v) const {
        if (v.size() != dims()) return false;
        for (std::size_t d = 0; d < v.size(); ++d)
            if (!(v[d] >= lo[d] && v[d] <= hi[d]) || !std::isfinite(v[d])) return false;
        return true;
    }
};

struct ActionVector {
    std::vector<double> values;

    std::size_t dims() const { return values.size(); }
};

inline ActionVector make_action(std::vector<double> values, const Bounds& bounds) {
    if (values.size() != bounds.dims())
        throw BoundsError("action has " + std::to_string(values.size()) +
                          " dimensions, bounds declare " + std::to_string(bounds.dims()));
    if (!bounds.contains(values))
        throw BoundsError("action value outside declared bounds");
    return ActionVector{std::move(values)};
}

// A batch of actions plus, once evaluated, one reward per row.
struct Population {
    std::vector<ActionVector> actions;
    std::vector<double> rewards;

    std::size_t size() const { return actions.size(); }
    bool empty() const { return actions.empty(); }
    bool evaluated() const { return !actions.empty() && rewards.size() == actions.size(); }

    void append_row(ActionVector a, double r) {
        actions.push_back(std::move(a));
        rewards.push_back(r);
    }
};

// Exactly two blocks: the most recent generation and the examples it was
// conditioned on. The example block is empty only before the first step.
struct MemoryBuffer {
    Population new_block;
    Population example_block;

    std::size_t total_rows() const { return new_block.size() + example_block.size(); }
};

struct BestRecord {
    ActionVector action;
    double reward = -std::numeric_limits<double>::infinity();
    long iteration_found = -1;

    bool valid() const { return iteration_found >= 0; }
};

enum class SamplerKind { Elitist, Lifo };

inline const char* sampler_name(SamplerKind s) {
    return s == SamplerKind::Elitist ? "elitist" : "lifo";
}

namespace detail {

// Canonical row order for tie-breaking: new-block rows first, then example
// rows, each in stored order. A stable sort on descending reward therefore
// prefers fresher rows among equals.
struct RowRef {
    const Population* pop;
    std::size_t index;
    double reward;
};

inline std::vector<RowRef> gather_rows(const MemoryBuffer& memory) {
    for (const Population* p : {&memory.new_block, &memory.example_block}) {
        if (!p->empty() && !p->evaluated())
            throw StructuralError("memory holds unevaluated rows");
    }
    std::vector<RowRef> rows;
    rows.reserve(memory.total_rows());
    for (std::size_t i = 0; i < memory.new_block.size(); ++i)
        rows.push_back({&memory.new_block, i, memory.new_block.rewards[i]});
    for (std::size_t i = 0; i < memory.example_block.size(); ++i)
        rows.push_back({&memory.example_block, i, memory.example_block.rewards[i]});
    return rows;
}

inline Population take_top(std::vector<RowRef> rows, std::size_t count) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RowRef& a, const RowRef& b) { return a.reward > b.reward; });
    Population out;
    out.actions.reserve(count);
    out.rewards.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.actions.push_back(rows[i].pop->actions[rows[i].index]);
        out.rewards.push_back(rows[i].reward);
    }
    return out;
}

}  // namespace detail

// The P rows with highest reward across both blocks, sorted descending.
inline Population elitist_sample(const MemoryBuffer& memory, std::size_t P) {
    auto rows = detail::gather_rows(memory);
    if (rows.size() < P)
        throw StructuralError("elitist sampling needs at least " + std::to_string(P) +
                              " evaluated rows, memory holds " + std::to_string(rows.size()));
    return detail::take_top(std::move(rows), P);
}

// The most recent generation. With a single agent the block already has P
// rows and is returned verbatim; a larger block (ensemble step) is reduced
// to its P best rows.
inline Population lifo_sample(const MemoryBuffer& memory, std::size_t P) {
    const Population& recent = memory.new_block;
    if (recent.empty()) throw StructuralError("lifo sampling from empty new block");
    if (!recent.evaluated()) throw StructuralError("lifo sampling from unevaluated block");
    if (recent.size() < P)
        throw StructuralError("lifo sampling needs " + std::to_string(P) +
                              " rows, most recent block holds " + std::to_string(recent.size()));
    if (recent.size() == P) return recent;
    std::vector<detail::RowRef> rows;
    rows.reserve(recent.size());
    for (std::size_t i = 0; i < recent.size(); ++i)
        rows.push_back({&recent, i, recent.rewards[i]});
    return detail::take_top(std::move(rows), P);
}

inline Population sample_examples(const MemoryBuffer& memory, SamplerKind sampler,
                                  std::size_t P) {
    return sampler == SamplerKind::Elitist ? elitist_sample(memory, P)
                                           : lifo_sample(memory, P);
}

// The record moves only on strict improvement, so the earliest achiever of
// a reward value is kept.
inline BestRecord update_best(BestRecord best, const Population& pop, long iteration) {
    if (!pop.evaluated()) throw StructuralError("update_best on unevaluated population");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
        if (pop.rewards[i] > pop.rewards[arg]) arg = i;
    if (pop.rewards[arg] > best.reward) {
        best.action = pop.actions[arg];
        best.reward = pop.rewards[arg];
        best.iteration_found = iteration;
    }
    return best;
}

inline MemoryBuffer update_memory(Population new_pop, Population examples) {
    if (!new_pop.evaluated()) throw StructuralError("memory update with unevaluated generation");
    if (!examples.evaluated()) throw StructuralError("memory update with unevaluated examples");
    MemoryBuffer m;
    m.new_block = std::move(new_pop);
    m.example_block = std::move(examples);
    return m;
}

}  // namespace llmo

#endif
