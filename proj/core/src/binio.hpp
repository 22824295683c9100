#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include <Eigen/Dense>

#include "aolcorr/error.hpp"

namespace aolcorr::binio {

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double read_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ParseError("binary payload truncated", 0);
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) write_f64(out, v(k));
}

inline Eigen::VectorXd read_vector(std::istream& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = read_f64(in);
  return v;
}

}  // namespace aolcorr::binio
