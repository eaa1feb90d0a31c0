#pragma once

#include <string>

#include "depthfill/tensor.hpp"

namespace depthfill {

// Flat tensor container:
//   bytes 0..3   magic "DFTN"
//   bytes 4..11  u64 LE length of the JSON header
//   header       UTF-8 JSON {"format_version":1,"tensors":[{name,shape,offset}...]}
//   payload      concatenated little-endian float32 values, in header order
// Offsets are element offsets into the payload. Order round-trips.
void save_params(const ParamStore<float>& params, const std::string& path);

// Trainability is recovered from the name: entries under "opt." or containing
// ".running_" load as plain state, everything else as trainable.
ParamStore<float> load_params(const std::string& path);

}  // namespace depthfill
