#pragma once

#include <string>

#include "ulfe/vol/volume.hpp"

namespace ulfe {
namespace vol {

// NIfTI-1 single-file volumes, plain or gzip-compressed (by .gz suffix on
// write; sniffed on read). Loaded volumes carry norm_state = raw.
Volume read_nifti(const std::string& path);
void write_nifti(const std::string& path, const Volume& v);

// Integer label/mask payloads are stored as uint8.
Tensor<std::uint8_t> read_nifti_u8(const std::string& path);
void write_nifti_u8(const std::string& path, const Tensor<std::uint8_t>& t,
                    const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

}  // namespace vol
}  // namespace ulfe
