#pragma once

#include <string>
#include <vector>

#include "wayflow/tensor.hpp"

namespace wayflow {

struct ToyDatasetSpec {
    int64_t num_classes = 4;
    int64_t image_size = 32;
    int64_t samples_per_class = 128;
    uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    std::vector<Tensor> images;  // each [H, W, 3] in [-1, 1]
    std::vector<int> labels;
    int64_t num_classes = 0;
    int64_t image_size = 0;

    size_t size() const { return images.size(); }
};

// Class-conditional shapes on soft gradient backgrounds. Class k renders
// shape (k mod 2) in palette color (k div 2), so counterfactual class pairs
// share either geometry or color and their raw pixel statistics overlap.
// Jitter moves position, scale and tone per sample. Deterministic per spec.
Dataset generate_toy_dataset(const ToyDatasetSpec& spec);

struct FolderLoadResult {
    Dataset dataset;
    int64_t skipped = 0;  // unreadable or non-image files
    std::vector<std::string> warnings;
};

// Labels come from the sorted subdirectory index; images are center-cropped,
// bilinear-resized and mapped to [-1, 1]. Unreadable files are skipped with
// a warning; a folder yielding zero images is an error.
FolderLoadResult load_image_folder(const std::string& path,
                                   int64_t image_size);

// Writes dataset images as PNGs under per-class subdirectories
// (class_00/img_00000.png ...), the layout load_image_folder expects.
void write_dataset_folder(const Dataset& data, const std::string& dir);

}  // namespace wayflow
