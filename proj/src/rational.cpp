#include "imkt/rational.hpp"

namespace imkt {

Rat parse_rat(std::string_view text) {
    auto fail = [&] {
        throw std::invalid_argument("parse_rat: bad rational '" + std::string(text) + "'");
    };
    if (text.empty()) fail();
    size_t pos = 0;
    bool neg = false;
    if (text[pos] == '-' || text[pos] == '+') {
        neg = text[pos] == '-';
        ++pos;
    }
    auto digits = [&](size_t start) -> size_t {
        size_t i = start;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
        return i;
    };
    size_t num_end = digits(pos);
    if (num_end == pos) fail();
    mpz_class num(std::string(text.substr(pos, num_end - pos)), 10);
    mpz_class den(1);
    if (num_end != text.size()) {
        if (text[num_end] != '/') fail();
        size_t den_start = num_end + 1;
        size_t den_end = digits(den_start);
        if (den_end == den_start || den_end != text.size()) fail();
        den = mpz_class(std::string(text.substr(den_start, den_end - den_start)), 10);
        if (den == 0) fail();
    }
    if (neg) num = -num;
    Rat r(num, den);
    r.canonicalize();
    return r;
}

std::string rat_str(const Rat& r) { return r.get_str(); }

Rat ceil_to_grid(const Rat& v, long n) {
    if (n < 1) throw std::invalid_argument("ceil_to_grid: n must be >= 1");
    Rat scaled = v * n;
    mpz_class q;
    mpz_cdiv_q(q.get_mpz_t(), scaled.get_num_mpz_t(), scaled.get_den_mpz_t());
    Rat out(q, n);
    out.canonicalize();
    return out;
}

bool on_grid(const Rat& v, long n) {
    Rat scaled = v * n;
    return scaled.get_den() == 1;
}

long grid_units(const Rat& v, long n) {
    Rat scaled = v * n;
    if (scaled.get_den() != 1) throw std::invalid_argument("grid_units: value off grid");
    if (!scaled.get_num().fits_slong_p()) throw std::overflow_error("grid_units: too large");
    return scaled.get_num().get_si();
}

Rat inv_pow2(unsigned long e) {
    mpz_class d(1);
    d <<= e;
    Rat r(1, d);
    r.canonicalize();
    return r;
}

unsigned long pow2_exponent_at_least(const mpz_class& t) {
    if (t <= 1) return 0;
    mpz_class m = t - 1;
    return mpz_sizeinbase(m.get_mpz_t(), 2);
}

std::vector<Rat> parse_rat_vector(const std::vector<std::string>& parts) {
    std::vector<Rat> out;
    out.reserve(parts.size());
    for (const auto& p : parts) out.push_back(parse_rat(p));
    return out;
}

}  // namespace imkt
