#pragma once

#include <stdexcept>
#include <string>

namespace qmf {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

class SymmetryViolation : public Error {
public:
  using Error::Error;
};

// A linear system that should be solvable is (numerically) singular.
class SingularSystem : public Error {
public:
  using Error::Error;
};

// Fewer than d usable directions in the data (initialization).
class RankDeficiency : public Error {
public:
  using Error::Error;
};

// Latent coordinates degenerated during orthonormalization.
class RankCollapse : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const std::string &what) {
  if (!ok) throw DimensionMismatch(what);
}

} // namespace detail
} // namespace qmf
