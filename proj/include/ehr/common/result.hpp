#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace ehr {

enum class Errc {
  duplicate_id,
  invalid_zone,
  not_found,
  unknown_patient,
  unknown_clinician,
  unknown_facility,
  unknown_rx,
  not_active,
  no_refills_left,
  validation,
  clock_drift,
  cursor_out_of_range,
  malformed_event,
  link_down,
  partial,
  bad_credentials,
  locked,
  unknown_principal,
  expired_token,
  forbidden,
  unknown_link,
  page_out_of_range,
  unsuppressed_input,
  assertion_failed,
  io_error,
  invalid_config,
};

/// Stable upper-case name used on the wire and in audit outcomes.
std::string_view errc_name(Errc code) noexcept;

struct Error {
  Errc code;
  std::string detail;

  std::string to_string() const;
};

class BadResultAccess : public std::logic_error {
 public:
  explicit BadResultAccess(const Error& e)
      : std::logic_error("bad result access: " + e.to_string()) {}
};

template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Error error) : v_(std::move(error)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const noexcept { return v_.index() == 0; }
  explicit operator bool() const noexcept { return ok(); }

  T& value() & {
    check();
    return std::get<0>(v_);
  }
  const T& value() const& {
    check();
    return std::get<0>(v_);
  }
  T&& value() && {
    check();
    return std::get<0>(std::move(v_));
  }
  const Error& error() const { return std::get<1>(v_); }
  Errc code() const { return error().code; }

  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  void check() const {
    if (!ok()) throw BadResultAccess(std::get<1>(v_));
  }
  std::variant<T, Error> v_;
};

struct Ok {};

using Status = Result<Ok>;

inline Error make_error(Errc code, std::string detail = {}) {
  return Error{code, std::move(detail)};
}

}  // namespace ehr
