#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mongeflow {

// Error taxonomy; the CLI maps these onto process exit codes.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularTimeError : NumericalError {
  using NumericalError::NumericalError;
};
struct DivergenceError : NumericalError {
  using NumericalError::NumericalError;
};
struct CapacityError : NumericalError {
  using NumericalError::NumericalError;
};
struct DegeneracyError : NumericalError {
  using NumericalError::NumericalError;
};
struct CoverageError : NumericalError {
  using NumericalError::NumericalError;
};

// Deterministic RNG with cheap substreams: Rng(seed, stream) yields
// independent sequences so parallel callers can partition seed space.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  double uniform();                    // [0,1)
  double normal();                     // standard normal (Box-Muller)
  int uniform_int(int n);              // {0,...,n-1}
  std::uint64_t next_u64();

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

double logsumexp(const std::vector<double>& v);

// Standard normal CDF and its inverse (inverse accurate to ~1e-15 after
// one Halley refinement of the Acklam seed).
double normal_cdf(double x);
double normal_quantile(double p);

// Composite Simpson on [a,b].
double simpson(const std::function<double(double)>& f, double a, double b,
               int panels);

// Locale-independent decimal with 17 significant digits (round-trips
// doubles bit-exactly).
std::string format_double(double v);
double parse_double(const std::string& s);  // throws IoError

std::uint64_t fnv1a(const void* data, std::size_t n);
std::string fnv1a_hex_of_file(const std::string& path);

// Runs fn(chunk_index) for chunk_index in [0, chunks) on up to `workers`
// threads. Chunk identity, not worker identity, determines any RNG stream,
// so results are invariant to the worker count.
void run_chunks(int chunks, int workers, const std::function<void(int)>& fn);

}  // namespace mongeflow
