#pragma once

#include <optional>
#include <string>
#include <vector>

#include "disco/embedding.hpp"

namespace disco {

/// One generated image as seen by the reward and metric code.
struct ImageRecord {
  std::string image_id;
  std::string prompt_id;
  int target_count = 1;
  std::vector<FaceRecord> faces;
  std::optional<double> quality_raw;
  std::optional<std::string> tag;

  std::size_t face_count() const noexcept { return faces.size(); }
};

/// Images sampled for one prompt.
struct GroupRecord {
  std::string prompt_id;
  std::vector<ImageRecord> images;
};

}  // namespace disco
