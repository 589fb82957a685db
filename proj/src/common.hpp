#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpopf {

class Error : public std::runtime_error {
  public:
    enum class Kind { io, invalid, solver, internal };

    Error(Kind kind, const std::string &msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

    static Error io(const std::string &msg) { return Error(Kind::io, msg); }
    static Error invalid(const std::string &msg) { return Error(Kind::invalid, msg); }
    static Error solver(const std::string &msg) { return Error(Kind::solver, msg); }
    static Error internal(const std::string &msg) { return Error(Kind::internal, msg); }

  private:
    Kind kind_;
};

// Deterministic PRNG. std::mt19937 is portable but the standard distributions
// are not; generation here must be bit-reproducible across platforms and
// thread counts, so both the generator and the samplers are written out.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // standard normal via Box-Muller; pairs are cached
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Mixes independent stream identifiers into a base seed so that per-item
// streams do not depend on iteration order.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t item = 0);

// FNV-1a content hashes, used to fingerprint feeders/datasets.
std::uint64_t fnv1a(const void *data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string &s, std::uint64_t h = 0xcbf29ce484222325ULL);

std::string hash_hex(std::uint64_t h);

// Round-trippable double formatting for file output.
std::string format_double(double v);

// Runs fn(i) for i in [0, n). Work is split statically so results written to
// pre-sized slots are identical for any thread count.
void parallel_for(int n, const std::function<void(int)> &fn, int threads = 0);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &content);

} // namespace gpopf
