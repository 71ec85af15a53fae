#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace meanbias {

using int128 = __int128;

inline int128 abs128(int128 v) { return v < 0 ? -v : v; }

inline int128 gcd128(int128 a, int128 b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    const int128 r = a % b;
    a = b;
    b = r;
  }
  return a;
}

inline std::string to_string(int128 v) {
  if (v == 0) return "0";
  const bool negative = v < 0;
  unsigned __int128 u =
      negative ? static_cast<unsigned __int128>(-(v + 1)) + 1
               : static_cast<unsigned __int128>(v);
  std::string digits;
  while (u != 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (negative) digits.push_back('-');
  return {digits.rbegin(), digits.rend()};
}

/// Exact rational number with 128-bit numerator and denominator, always kept
/// normalized (gcd 1, positive denominator). All load/probability quantities
/// in this library have numerators far below 2^100, so plain 128-bit storage
/// suffices; arithmetic still checks for overflow and throws rather than
/// wrapping.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(std::int64_t value) : num_(value), den_(1) {}  // NOLINT(implicit)
  Rational(int128 num, int128 den) : num_(num), den_(den) { normalize(); }

  static Rational of(std::int64_t num, std::int64_t den) {
    return Rational(static_cast<int128>(num), static_cast<int128>(den));
  }

  int128 num() const { return num_; }
  int128 den() const { return den_; }

  Rational operator-() const { return Rational(-num_, den_, 0); }

  Rational operator+(const Rational& o) const {
    return Rational(checked_add(checked_mul(num_, o.den_),
                                checked_mul(o.num_, den_)),
                    checked_mul(den_, o.den_));
  }
  Rational operator-(const Rational& o) const { return *this + (-o); }
  Rational operator*(const Rational& o) const {
    return Rational(checked_mul(num_, o.num_), checked_mul(den_, o.den_));
  }
  Rational operator/(const Rational& o) const {
    if (o.num_ == 0) throw std::domain_error("rational division by zero");
    return Rational(checked_mul(num_, o.den_), checked_mul(den_, o.num_));
  }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  bool operator==(const Rational& o) const {
    return num_ == o.num_ && den_ == o.den_;
  }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const {
    return checked_mul(num_, o.den_) < checked_mul(o.num_, den_);
  }
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator<=(const Rational& o) const { return !(o < *this); }
  bool operator>=(const Rational& o) const { return !(*this < o); }

  Rational abs() const { return num_ < 0 ? -*this : *this; }

  double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }
  long double to_long_double() const {
    return static_cast<long double>(num_) / static_cast<long double>(den_);
  }

  /// "p/q" for non-integers, plain integer string otherwise.
  std::string to_string() const {
    if (den_ == 1) return meanbias::to_string(num_);
    return meanbias::to_string(num_) + "/" + meanbias::to_string(den_);
  }

 private:
  Rational(int128 num, int128 den, int) : num_(num), den_(den) {}

  static int128 checked_add(int128 a, int128 b) {
    int128 out;
    if (__builtin_add_overflow(a, b, &out))
      throw std::overflow_error("rational addition overflow");
    return out;
  }
  static int128 checked_mul(int128 a, int128 b) {
    int128 out;
    if (__builtin_mul_overflow(a, b, &out))
      throw std::overflow_error("rational multiplication overflow");
    return out;
  }

  void normalize() {
    if (den_ == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    if (num_ == 0) {
      den_ = 1;
      return;
    }
    const int128 g = gcd128(num_, den_);
    num_ /= g;
    den_ /= g;
  }

  int128 num_;
  int128 den_;
};

}  // namespace meanbias
