#include "wayflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "wayflow/image_io.hpp"

namespace fs = std::filesystem;

namespace wayflow {

void ToyDatasetSpec::validate() const {
    if (num_classes < 2)
        throw ValueError("toy dataset: need at least 2 classes");
    if (image_size < 8)
        throw ValueError("toy dataset: image size too small");
    if (samples_per_class < 1)
        throw ValueError("toy dataset: need at least 1 sample per class");
}

namespace {

struct Palette {
    double r, g, b;
};

// distinct hues; class color = palette[class / 2]
constexpr Palette kPalette[8] = {
    {0.9, -0.4, -0.5},   // red
    {-0.6, -0.2, 0.9},   // blue
    {-0.4, 0.8, -0.3},   // green
    {0.9, 0.7, -0.5},    // yellow
    {0.8, -0.3, 0.8},    // magenta
    {-0.5, 0.8, 0.8},    // cyan
    {0.9, 0.3, 0.0},     // orange
    {0.4, 0.4, 0.4},     // gray
};

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// signed distance to the class shape, negative inside
double shape_distance(int shape, double dx, double dy, double radius) {
    if (shape == 0) {  // disc
        return std::sqrt(dx * dx + dy * dy) - radius;
    }
    // square
    const double ax = std::abs(dx) - radius * 0.9;
    const double ay = std::abs(dy) - radius * 0.9;
    const double ox = std::max(ax, 0.0), oy = std::max(ay, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(ax, ay), 0.0);
}

}  // namespace

Dataset generate_toy_dataset(const ToyDatasetSpec& spec) {
    spec.validate();
    Dataset data;
    data.num_classes = spec.num_classes;
    data.image_size = spec.image_size;
    const int64_t side = spec.image_size;

    for (int64_t cls = 0; cls < spec.num_classes; ++cls) {
        for (int64_t i = 0; i < spec.samples_per_class; ++i) {
            RngStream rng(mix_seed(spec.seed,
                                   static_cast<uint64_t>(cls * 1000003 + i)));
            const int shape = static_cast<int>(cls % 2);
            const Palette base =
                kPalette[static_cast<size_t>((cls / 2) % 8)];

            // pose and tone jitter; position stays within roughly one patch
            // so class layouts remain recognizable to a fixed classifier
            const double cx =
                0.5 + 0.08 * (2.0 * rng.uniform() - 1.0);
            const double cy =
                0.5 + 0.08 * (2.0 * rng.uniform() - 1.0);
            const double radius = 0.20 + 0.04 * (2.0 * rng.uniform() - 1.0);
            const double jr = 0.12 * (2.0 * rng.uniform() - 1.0);
            const double jg = 0.12 * (2.0 * rng.uniform() - 1.0);
            const double jb = 0.12 * (2.0 * rng.uniform() - 1.0);

            // shared background family: soft diagonal gradient, dim tones
            const double b0 = -0.75 + 0.25 * rng.uniform();
            const double b1 = -0.55 + 0.25 * rng.uniform();
            const double angle = 6.283185307179586 * rng.uniform();
            const double gx = std::cos(angle), gy = std::sin(angle);

            Tensor img({side, side, 3});
            const double aa = 1.5 / static_cast<double>(side);
            for (int64_t y = 0; y < side; ++y) {
                for (int64_t x = 0; x < side; ++x) {
                    const double u =
                        (static_cast<double>(x) + 0.5) / static_cast<double>(side);
                    const double v =
                        (static_cast<double>(y) + 0.5) / static_cast<double>(side);
                    const double g =
                        0.5 + 0.5 * ((u - 0.5) * gx + (v - 0.5) * gy);
                    const double bg = b0 + (b1 - b0) * g;
                    const double d =
                        shape_distance(shape, u - cx, v - cy, radius);
                    const double alpha = 1.0 - smoothstep(-aa, aa, d);
                    double* px = img.data() + (y * side + x) * 3;
                    px[0] = bg + alpha * (base.r + jr - bg);
                    px[1] = bg + alpha * (base.g + jg - bg);
                    px[2] = bg + alpha * (base.b + jb - bg);
                }
            }
            for (auto& p : img.vec()) p = std::clamp(p, -1.0, 1.0);
            data.images.push_back(std::move(img));
            data.labels.push_back(static_cast<int>(cls));
        }
    }
    return data;
}

FolderLoadResult load_image_folder(const std::string& path,
                                   int64_t image_size) {
    if (!fs::is_directory(path))
        throw DataError("dataset folder does not exist: " + path);

    std::vector<std::string> class_dirs;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_directory()) class_dirs.push_back(entry.path().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw DataError("dataset folder has no class subdirectories: " + path);

    FolderLoadResult result;
    result.dataset.image_size = image_size;
    result.dataset.num_classes = static_cast<int64_t>(class_dirs.size());
    for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[cls]))
            if (entry.is_regular_file()) files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
        for (const std::string& file : files) {
            try {
                img::Image8 im = img::load_image(file);
                result.dataset.images.push_back(
                    img::to_tensor(img::center_crop_resize(im, image_size)));
                result.dataset.labels.push_back(static_cast<int>(cls));
            } catch (const Error& e) {
                ++result.skipped;
                result.warnings.push_back(file + ": " + e.what());
            }
        }
    }
    if (result.dataset.images.empty())
        throw DataError("dataset folder contains no readable images: " + path);
    return result;
}

void write_dataset_folder(const Dataset& data, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<int64_t> counters(static_cast<size_t>(data.num_classes), 0);
    char buf[64];
    for (size_t i = 0; i < data.images.size(); ++i) {
        const int cls = data.labels[i];
        std::snprintf(buf, sizeof(buf), "class_%02d", cls);
        const fs::path cdir = fs::path(dir) / buf;
        fs::create_directories(cdir);
        std::snprintf(buf, sizeof(buf), "img_%05lld.png",
                      static_cast<long long>(counters[static_cast<size_t>(cls)]++));
        img::export_image(data.images[i], (cdir / buf).string());
    }
}

}  // namespace wayflow
