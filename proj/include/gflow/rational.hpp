#pragma once

#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

namespace gflow {

// Exact arithmetic for money, hours and resource quantities.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Accepts "12", "-0.25", "1e-05", "3/4". Throws Error(ParseError) on anything else.
Rational parse_rational(std::string_view text);

// Exact value of the shortest decimal that round-trips to `value`.
Rational from_double(double value);

double to_double(const Rational& value);

// Canonical exact form: "7", "-3/4". Inverse of parse_rational.
std::string to_exact_string(const Rational& value);

// Fixed-point rendering rounded half away from zero, e.g. to_fixed(1.575, 2) == "1.58".
std::string to_fixed(const Rational& value, int digits);

// Round half away from zero to an integer.
BigInt round_half_up(const Rational& value);
BigInt ceil(const Rational& value);
BigInt floor(const Rational& value);

// JSON numbers are read through their shortest decimal text; strings through parse_rational.
Rational rational_from_json(const nlohmann::json& value);
nlohmann::json rational_to_json(const Rational& value);

}  // namespace gflow
