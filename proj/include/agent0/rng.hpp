#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace agent0 {

// Deterministic counter-based stream. Every random draw in a run is made on a
// stream derived from the root seed through a chain of names and indices, so
// any component can be replayed in isolation and results do not depend on
// thread scheduling.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : seed_(seed) {}
    RngStream(uint64_t root, std::string_view name) : seed_(derive(root, name)) {}

    RngStream child(std::string_view name) const { return RngStream(derive(seed_, name)); }
    RngStream child(uint64_t index) const { return RngStream(mix(seed_, index)); }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64();
    // [0, 1), 53-bit resolution
    double next_unit();
    // inclusive bounds
    int64_t next_int(int64_t lo, int64_t hi);
    // index into probs by inverse-CDF walk; probs need not be perfectly normalized
    size_t sample_categorical(std::span<const double> probs);

    static uint64_t derive(uint64_t seed, std::string_view name);
    static uint64_t mix(uint64_t a, uint64_t b);

  private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace agent0
