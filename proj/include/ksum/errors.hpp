#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ksum {

/// Stable error codes. The CLI maps these 1:1 onto machine-readable error
/// objects, so names must not change between releases.
enum class errc {
  not_coprime,
  range_too_long,
  weight_too_short,
  x_exceeds_q,
  domain_error,
  window_invalid,
  unknown_theorem_id,
  not_prime,
  regime_error,
  bound_class_error,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::not_coprime: return "NotCoprime";
    case errc::range_too_long: return "RangeTooLong";
    case errc::weight_too_short: return "WeightTooShort";
    case errc::x_exceeds_q: return "XExceedsQ";
    case errc::domain_error: return "DomainError";
    case errc::window_invalid: return "WindowInvalid";
    case errc::unknown_theorem_id: return "UnknownTheoremId";
    case errc::not_prime: return "NotPrime";
    case errc::regime_error: return "RegimeError";
    case errc::bound_class_error: return "BoundClassError";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }
  const char* code_name() const noexcept { return errc_name(code_); }

 private:
  errc code_;
};

struct not_coprime final : error {
  static constexpr std::size_t no_index = static_cast<std::size_t>(-1);
  explicit not_coprime(const std::string& what, std::size_t index = no_index)
      : error(errc::not_coprime, what), offending_index(index) {}
  /// First offending position for list operations, no_index otherwise.
  std::size_t offending_index;
};

struct range_too_long final : error {
  explicit range_too_long(const std::string& what) : error(errc::range_too_long, what) {}
};
struct weight_too_short final : error {
  explicit weight_too_short(const std::string& what) : error(errc::weight_too_short, what) {}
};
struct x_exceeds_q final : error {
  explicit x_exceeds_q(const std::string& what) : error(errc::x_exceeds_q, what) {}
};
struct domain_error final : error {
  explicit domain_error(const std::string& what) : error(errc::domain_error, what) {}
};
struct window_invalid final : error {
  explicit window_invalid(const std::string& what) : error(errc::window_invalid, what) {}
};
struct unknown_theorem_id final : error {
  explicit unknown_theorem_id(const std::string& what) : error(errc::unknown_theorem_id, what) {}
};
struct not_prime final : error {
  explicit not_prime(const std::string& what) : error(errc::not_prime, what) {}
};
struct regime_error final : error {
  explicit regime_error(const std::string& what) : error(errc::regime_error, what) {}
};
struct bound_class_error final : error {
  explicit bound_class_error(const std::string& what) : error(errc::bound_class_error, what) {}
};
struct io_error final : error {
  explicit io_error(const std::string& what) : error(errc::io_error, what) {}
};

} // namespace ksum
