#pragma once

#include <filesystem>
#include <string>

#include "heml/sample.hpp"

namespace heml {

// HSEG sample file, little-endian and bit-exact:
//   magic "HSEG", u16 version = 1, u32 n, u32 dim,
//   n*dim f32 features, n*dim u8 masks, n i32 labels.
// The segment name is not stored; the manifest assigns it.

void save_hseg(const std::filesystem::path& path, const Dataset& data);

Dataset load_hseg(const std::filesystem::path& path,
                  const std::string& segment_id);

}  // namespace heml
