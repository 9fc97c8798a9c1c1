#pragma once

#include <cstdint>

#include "fedlpa/dataset.hpp"
#include "fedlpa/laplace.hpp"

namespace fedlpa {

// Adds independent Laplace(0, 1/epsilon) noise to every feature; labels are
// kept and values are not clipped back to [0, 1]. Throws InputError on
// epsilon <= 0.
LabeledDataset dp_noise_data(const LabeledDataset& data, double epsilon, std::uint64_t seed);

// Adds Laplace(0, sensitivity/epsilon) noise to every float of M, A and B,
// then re-symmetrizes the factors. Throws InputError if epsilon or
// sensitivity is not positive.
ClientPayload dp_noise_payload(const ClientPayload& payload, double epsilon, double sensitivity,
                               std::uint64_t seed);

}  // namespace fedlpa
