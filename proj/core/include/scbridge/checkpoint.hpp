#pragma once

#include <iosfwd>

#include "scbridge/nn.hpp"

namespace scbridge {

/**
 * Binary parameter checkpoint.
 *
 * Layout (little-endian): magic `SCBPARAM`, u32 format version, u64 step_count, u64 layer count,
 * u64 embedding count, then for each Param in declaration order: u64 rows, u64 cols, and
 * rows*cols doubles for value, first moment and second moment. Gradients are not stored.
 */
void save_parameters(std::ostream& out, const ParameterSet& params);
ParameterSet load_parameters(std::istream& in);

}  // namespace scbridge
