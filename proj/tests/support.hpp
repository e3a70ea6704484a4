#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fcmtm/error.hpp"
#include "fcmtm/hdr_io.hpp"
#include "fcmtm/random.hpp"
#include "fcmtm/tensor.hpp"

namespace fcmtm::test {

inline Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

inline void append_f32_le(Bytes& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline void append_f32_be(Bytes& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename Scalar>
Tensor<Scalar> random_tensor(typename Tensor<Scalar>::Shape shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  SplitMix64 rng(seed);
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(lo + (hi - lo) * rng.uniform());
  return t;
}

inline HdrImage random_hdr(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 10.0) {
  SplitMix64 rng(seed);
  HdrImage img(w, h);
  for (Index i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return img;
}

/// Fresh, empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fcmtm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fcmtm::Error");
  return ErrorCode::io_failure;
}

}  // namespace fcmtm::test
