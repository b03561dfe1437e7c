#ifndef LLMO_PROMPT_HPP
#define LLMO_PROMPT_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/population.hpp"

namespace llmo {

// Actions are rendered either as fixed-point decimals with `digits`
// fractional places, or as integers on the 0 .. 10^digits - 1 grid that are
// mapped affinely onto the bounds. Rewards are always fixed-point decimals.
enum class NumberMode { Decimal, Integer };

struct NumberEncoding {
    NumberMode mode = NumberMode::Decimal;
    int digits = 3;

    long integer_top() const {
        long top = 1;
        for (int i = 0; i < digits; ++i) top *= 10;
        return top - 1;
    }
};

// Four-part prompt: task description, data format, in-context example rows,
// and the generation instruction. `{P}`, `{D}`, `{x_min}`, `{x_max}` and
// `{i_max}` are substituted at render time; the constraint sentence, when
// present, is appended to the task description.
struct PromptTemplate {
    std::string task;
    std::string data_format;
    std::string instruction;
    std::string constraint;

    static PromptTemplate standard() {
        PromptTemplate t;
        t.task =
            "You are an agent tasked to maximize a reward function by determining "
            "{D}-dimensional action vector [x_1, ..., x_{D}] whose elements are "
            "between {x_min} and {x_max}.";
        t.data_format =
            "You are provided with the action-reward pairs. The first {D} columns "
            "stand for the action vectors, and the last column is the associated "
            "reward.";
        t.instruction =
            "Generate {P} new action vectors different from all above that can "
            "improve the reward. Actions should be presented in a CSV format of "
            "shape ({P}, {D}) where different rows indicate different action "
            "vectors. Do not generate text and codes.";
        return t;
    }

    static PromptTemplate standard_integer() {
        PromptTemplate t = standard();
        t.task =
            "You are an agent tasked to maximize a reward function by determining "
            "{D}-dimensional action vector [x_1, ..., x_{D}] whose elements are "
            "integers between 0 and {i_max}.";
        return t;
    }

    // Sum constraint expressed in the prompt language rather than the reward.
    static std::string sum_power_constraint(std::size_t D) {
        const std::string d = std::to_string(D);
        return "The action vector should satisfy 0<=x_d<=1 for d = 1, ..., " + d +
               " and \\sum_{d=1}^{" + d + "}x_d<=1.";
    }
};

namespace detail {

inline std::string fixed_decimal(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string compact_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline void replace_all(std::string& s, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = s.find(key, pos)) != std::string::npos) {
        s.replace(pos, key.size(), value);
        pos += value.size();
    }
}

inline std::string bound_label(const std::vector<double>& b) {
    bool all_equal = true;
    for (double v : b)
        if (v != b.front()) all_equal = false;
    if (all_equal) return compact_number(b.front());
    std::string out = "[";
    for (std::size_t d = 0; d < b.size(); ++d) {
        if (d) out += ", ";
        out += compact_number(b[d]);
    }
    return out + "]";
}

inline long to_integer_grid(double x, double lo, double hi, long top) {
    return std::lround((x - lo) / (hi - lo) * static_cast<double>(top));
}

inline double from_integer_grid(long g, double lo, double hi, long top) {
    return lo + static_cast<double>(g) / static_cast<double>(top) * (hi - lo);
}

}  // namespace detail

inline std::string format_action_value(double x, std::size_t dim, const Bounds& bounds,
                                       const NumberEncoding& enc) {
    if (enc.mode == NumberMode::Decimal) return detail::fixed_decimal(x, enc.digits);
    const long g = detail::to_integer_grid(x, bounds.lo[dim], bounds.hi[dim], enc.integer_top());
    return std::to_string(g);
}

inline std::string csv_header(std::size_t D) {
    std::string h;
    for (std::size_t d = 1; d <= D; ++d) h += "x_" + std::to_string(d) + ", ";
    return h + "reward";
}

inline std::string render_example_rows(const Population& examples, const Bounds& bounds,
                                       const NumberEncoding& enc) {
    if (!examples.evaluated())
        throw StructuralError("prompt rendering needs evaluated examples");
    std::string out = csv_header(bounds.dims()) + "\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const ActionVector& a = examples.actions[i];
        if (a.dims() != bounds.dims())
            throw StructuralError("example row dimension mismatch");
        for (std::size_t d = 0; d < a.dims(); ++d)
            out += format_action_value(a.values[d], d, bounds, enc) + ", ";
        out += detail::fixed_decimal(examples.rewards[i], enc.digits) + "\n";
    }
    return out;
}

// Pure: equal inputs produce byte-identical prompts.
inline std::string render_prompt(const Population& examples, const Bounds& bounds,
                                 std::size_t P, const PromptTemplate& tmpl,
                                 const NumberEncoding& enc) {
    auto fill = [&](std::string s) {
        detail::replace_all(s, "{P}", std::to_string(P));
        detail::replace_all(s, "{D}", std::to_string(bounds.dims()));
        detail::replace_all(s, "{x_min}", detail::bound_label(bounds.lo));
        detail::replace_all(s, "{x_max}", detail::bound_label(bounds.hi));
        detail::replace_all(s, "{i_max}", std::to_string(enc.integer_top()));
        return s;
    };
    std::string task = fill(tmpl.task);
    if (!tmpl.constraint.empty()) task += " " + fill(tmpl.constraint);
    return task + "\n\n" + fill(tmpl.data_format) + "\n\n" +
           render_example_rows(examples, bounds, enc) + "\n" + fill(tmpl.instruction) + "\n";
}

namespace detail {

inline bool is_decimal_literal(const std::string& s) {
    std::size_t i = (!s.empty() && (s[0] == '-' || s[0] == '+')) ? 1 : 0;
    bool digit_before = false, digit_after = true;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
        digit_before = true;
    }
    if (i < s.size() && s[i] == '.') {
        ++i;
        digit_after = false;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            ++i;
            digit_after = true;
        }
    }
    return i == s.size() && digit_before && digit_after;
}

inline bool is_integer_literal(const std::string& s) {
    std::size_t i = (!s.empty() && (s[0] == '-' || s[0] == '+')) ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

}  // namespace detail

// Reads a model reply into a population of exactly P in-bounds rows of D
// values. Code fences and prose lines are skipped; a line that looks like a
// CSV row of the right width must parse cleanly, and rows are never
// repaired. Shape, format, and bounds problems raise distinct errors.
inline Population parse_population(const std::string& text, std::size_t P, std::size_t D,
                                   const Bounds& bounds, const NumberEncoding& enc) {
    if (bounds.dims() != D) throw ValidationError("parse: bounds dimension mismatch");
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    std::string line;
    auto flush_line = [&](const std::string& raw) {
        ++line_no;
        const std::string t = detail::trim(raw);
        if (t.empty() || t.rfind("```", 0) == 0) return;
        const auto cells = detail::split_csv(t);
        const bool literal = enc.mode == NumberMode::Integer
                                 ? detail::is_integer_literal(cells.front())
                                 : detail::is_decimal_literal(cells.front());
        std::size_t numeric = 0;
        for (const auto& c : cells) {
            const bool ok = enc.mode == NumberMode::Integer ? detail::is_integer_literal(c)
                                                            : detail::is_decimal_literal(c);
            if (ok) ++numeric;
        }
        if (numeric == 0) return;  // prose
        if (numeric == cells.size()) {
            if (cells.size() != D)
                throw ShapeError("line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(D) + " columns, found " +
                                 std::to_string(cells.size()));
            std::vector<double> vals;
            vals.reserve(D);
            for (std::size_t d = 0; d < D; ++d) {
                try {
                if (enc.mode == NumberMode::Integer) {
                    const long g = std::stol(cells[d]);
                    if (g < 0 || g > enc.integer_top())
                        throw BoundsError("line " + std::to_string(line_no) +
                                          ": integer outside 0.." +
                                          std::to_string(enc.integer_top()));
                    vals.push_back(detail::from_integer_grid(g, bounds.lo[d], bounds.hi[d],
                                                             enc.integer_top()));
                } else {
                    const double v = std::stod(cells[d]);
                    if (!std::isfinite(v) || v < bounds.lo[d] || v > bounds.hi[d])
                        throw BoundsError("line " + std::to_string(line_no) +
                                          ": value outside declared bounds");
                    vals.push_back(v);
                }
                } catch (const std::out_of_range&) {
                    throw BoundsError("line " + std::to_string(line_no) +
                                      ": literal out of numeric range");
                }
            }
            rows.push_back(std::move(vals));
            return;
        }
        // Mixed content on a row-shaped line is a malformed cell, not prose.
        if (literal || cells.size() == D)
            throw FormatError("line " + std::to_string(line_no) + ": malformed numeric cell");
    };
    std::string buffer;
    for (char c : text) {
        if (c == '\n') {
            flush_line(buffer);
            buffer.clear();
        } else {
            buffer += c;
        }
    }
    flush_line(buffer);
    if (rows.size() != P)
        throw ShapeError("expected " + std::to_string(P) + " rows, found " +
                         std::to_string(rows.size()));
    Population pop;
    pop.actions.reserve(P);
    for (auto& r : rows) pop.actions.push_back(ActionVector{std::move(r)});
    return pop;
}

// Byte-pair segmentation of a plain decimal literal: runs of digits are cut
// into groups of up to three, left to right, on each side of the decimal
// point; sign and point are their own tokens. Concatenating the tokens
// restores the input.
inline std::vector<std::string> tokenize_number(const std::string& literal) {
    if (!detail::is_decimal_literal(literal) || (!literal.empty() && literal[0] == '+'))
        throw FormatError("not a plain decimal literal: '" + literal + "'");
    std::vector<std::string> tokens;
    std::size_t i = 0;
    if (literal[0] == '-') {
        tokens.emplace_back("-");
        i = 1;
    }
    auto emit_digits = [&](std::size_t from, std::size_t to) {
        for (std::size_t p = from; p < to; p += 3)
            tokens.push_back(literal.substr(p, std::min<std::size_t>(3, to - p)));
    };
    const std::size_t point = literal.find('.', i);
    if (point == std::string::npos) {
        emit_digits(i, literal.size());
    } else {
        emit_digits(i, point);
        tokens.emplace_back(".");
        emit_digits(point + 1, literal.size());
    }
    return tokens;
}

// Restricted numeric vocabulary: all 1-, 2-, and 3-digit groups plus the
// four separators "." "-" "," and newline.
inline std::uint64_t token_vocabulary_size() {
    std::uint64_t n = 0;
    for (int len = 1; len <= 3; ++len) {
        std::uint64_t groups = 1;
        for (int i = 0; i < len; ++i) groups *= 10;
        n += groups;
    }
    return n + 4;
}

// Tokens per rendered number: digit groups for the fractional part, plus
// one group for the integer part, the decimal point, and the trailing
// separator.
inline int tokens_per_number(int digits) {
    if (digits < 1) throw ValidationError("tokens_per_number: digits must be positive");
    return (digits + 2) / 3 + 3;
}

struct TokenSpaceSize {
    std::uint64_t vocabulary;
    int tokens_per_number;
    double log10_states;
};

// Size of the generation-state space for a population of P actions of D
// dimensions: |vocabulary| ^ (P * D * tokens_per_number), reported in
// log10 because the count itself overflows anything sensible.
inline TokenSpaceSize state_space_size(std::size_t P, std::size_t D, int digits) {
    TokenSpaceSize s{};
    s.vocabulary = token_vocabulary_size();
    s.tokens_per_number = tokens_per_number(digits);
    s.log10_states = static_cast<double>(P) * static_cast<double>(D) *
                     static_cast<double>(s.tokens_per_number) *
                     std::log10(static_cast<double>(s.vocabulary));
    return s;
}

}  // namespace llmo

#endif
