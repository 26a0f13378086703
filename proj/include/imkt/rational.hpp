#pragma once

#include <gmpxx.h>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imkt {

// Exact rational scalar. All market semantics run on these; no floating
// point is used anywhere in the library.
using Rat = mpq_class;

inline Rat rat(long num, long den = 1) {
    if (den == 0) throw std::invalid_argument("rat: zero denominator");
    Rat r(num, den);
    r.canonicalize();
    return r;
}

// Strict parser for "p", "-p", "p/q" with decimal digits only. Rejects
// floats, whitespace and empty strings; q must be positive.
Rat parse_rat(std::string_view text);

std::string rat_str(const Rat& r);

inline Rat rat_abs(const Rat& r) { return r < 0 ? Rat(-r) : r; }

// Smallest multiple of 1/n that is >= v.
Rat ceil_to_grid(const Rat& v, long n);

// True when v is an integer multiple of 1/n.
bool on_grid(const Rat& v, long n);

// v * n as a plain integer; v must be on the 1/n grid and small enough.
long grid_units(const Rat& v, long n);

// 2^-e as an exact rational (e >= 0).
Rat inv_pow2(unsigned long e);

// Smallest e >= 0 with 2^e >= t (t >= 1).
unsigned long pow2_exponent_at_least(const mpz_class& t);

std::vector<Rat> parse_rat_vector(const std::vector<std::string>& parts);

}  // namespace imkt
