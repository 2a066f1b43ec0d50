#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "net.hpp"
#include "util.hpp"

namespace convprobe {

namespace fs = std::filesystem;

// ---- Images -----------------------------------------------------------------

Image decode_ppm(std::span<const std::uint8_t> bytes, const std::string& what) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&] {
    skip_space();
    require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorCode::kData, what + ": malformed PPM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      require(v < 1'000'000, ErrorCode::kData, what + ": PPM header value too large");
    }
    return static_cast<int>(v);
  };
  require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6', ErrorCode::kData,
          what + ": not a binary P6 PPM");
  pos = 2;
  Image img;
  img.width = read_uint();
  img.height = read_uint();
  const int maxval = read_uint();
  require(img.width > 0 && img.height > 0, ErrorCode::kData, what + ": empty PPM");
  require(maxval > 0 && maxval <= 255, ErrorCode::kData, what + ": only 8-bit PPM is supported");
  require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::kData, what + ": malformed PPM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  require(bytes.size() - pos >= n, ErrorCode::kData, what + ": truncated PPM pixel data");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255)
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval));
  return img;
}

Image read_ppm(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kData, "cannot read image '" + path + "'");
  }
  return decode_ppm(bytes, path);
}

void write_ppm(const Image& image, const std::string& path) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.rgb.begin(), image.rgb.end());
  write_file(path, bytes);
}

Tensor image_to_tensor(const Image& image) {
  const std::int64_t H = image.height, W = image.width;
  Tensor t({3, H, W});
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) t[(c * H + y) * W + x] = image.rgb[static_cast<std::size_t>((y * W + x) * 3 + c)];
  return t;
}

Tensor load_image(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".tensor" || ext == ".nsrt") {
    Tensor t;
    try {
      t = load_raw_tensor(path);
    } catch (const Error& e) {
      fail(ErrorCode::kData, "cannot decode image tensor '" + path + "': " + e.what());
    }
    require(t.rank() == 3 && t.dim(0) == 3, ErrorCode::kData,
            "image tensor '" + path + "' must be [3,H,W], got " + shape_str(t.shape()));
    return t;
  }
  if (ext == ".ppm") return image_to_tensor(read_ppm(path));
  fail(ErrorCode::kData, "unsupported image format '" + ext + "' for '" + path + "' (use P6 PPM or a raw tensor)");
}

// ---- Preprocessing ----------------------------------------------------------

void PreprocessConfig::validate() const {
  require(crop > 0 && resize_to > 0, ErrorCode::kInvalidArgument, "crop and resize_to must be positive");
  require(crop <= resize_to, ErrorCode::kInvalidArgument,
          "crop " + std::to_string(crop) + " exceeds resize_to " + std::to_string(resize_to));
  require(scale > 0, ErrorCode::kInvalidArgument, "scale must be positive");
}

namespace {

Tensor bilinear(const Tensor& img, std::int64_t out_h, std::int64_t out_w) {
  const std::int64_t H = img.dim(1), W = img.dim(2);
  if (H == out_h && W == out_w) return img;
  Tensor out({3, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  for (std::int64_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(fy), y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - y0;
    for (std::int64_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(fx), x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const float* p = img.raw() + c * H * W;
        const double top = p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx;
        const double bot = p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

}  // namespace

Tensor resize_square(const Tensor& image, int side) {
  require(image.rank() == 3 && image.dim(0) == 3, ErrorCode::kData,
          "image must be [3,H,W], got " + shape_str(image.shape()));
  const std::int64_t H = image.dim(1), W = image.dim(2);
  if (H == side && W == side) return image;
  std::int64_t nh = side, nw = side;
  if (H < W)
    nw = std::max<std::int64_t>(side, std::llround(static_cast<double>(W) * side / H));
  else
    nh = std::max<std::int64_t>(side, std::llround(static_cast<double>(H) * side / W));
  const Tensor resized = bilinear(image, nh, nw);
  const std::int64_t oy = (nh - side) / 2, ox = (nw - side) / 2;
  Tensor out({3, side, side});
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < side; ++y)
      std::copy_n(resized.raw() + (c * nh + oy + y) * nw + ox, side, out.raw() + (c * side + y) * side);
  return out;
}

ImageView crop_view(const Tensor& square, const PreprocessConfig& config, int row, int col, bool flip,
                    CropPosition position) {
  const int R = config.resize_to, S = config.crop;
  require(square.shape() == Shape({3, R, R}), ErrorCode::kInvalidArgument,
          "crop source must be [3," + std::to_string(R) + "," + std::to_string(R) + "]");
  require(row >= 0 && col >= 0 && row + S <= R && col + S <= R, ErrorCode::kInvalidArgument,
          "crop window out of bounds");
  ImageView v{Tensor({3, S, S}), position, flip, row, col};
  for (int c = 0; c < 3; ++c) {
    const int src_c = config.order == ChannelOrder::kRgb ? c : 2 - c;
    const float m = config.mean[c];
    for (int y = 0; y < S; ++y) {
      const float* src = square.raw() + (static_cast<std::int64_t>(src_c) * R + row + y) * R + col;
      float* dst = v.pixels.raw() + (static_cast<std::int64_t>(c) * S + y) * S;
      for (int x = 0; x < S; ++x) dst[x] = (src[flip ? S - 1 - x : x] - m) * config.scale;
    }
  }
  return v;
}

ImageView preprocess(const Tensor& image, const PreprocessConfig& config, Mode mode, std::mt19937_64* rng) {
  config.validate();
  const Tensor square = resize_square(image, config.resize_to);
  const int slack = config.resize_to - config.crop;
  if (mode == Mode::kTest) return crop_view(square, config, slack / 2, slack / 2, false, CropPosition::kCenter);
  require(rng != nullptr, ErrorCode::kInvalidArgument, "train-mode preprocessing needs a random source");
  std::uniform_int_distribution<int> offset(0, slack);
  const int row = offset(*rng);
  const int col = offset(*rng);
  const bool flip = std::bernoulli_distribution(0.5)(*rng);
  return crop_view(square, config, row, col, flip, CropPosition::kRandom);
}

std::array<ImageView, 10> ten_crop(const Tensor& image, const PreprocessConfig& config) {
  config.validate();
  require(config.crop < config.resize_to, ErrorCode::kInvalidArgument,
          "ten-crop needs crop < resize_to, got crop " + std::to_string(config.crop) + " and resize_to " +
              std::to_string(config.resize_to));
  const Tensor square = resize_square(image, config.resize_to);
  const int far = config.resize_to - config.crop, mid = far / 2;
  const std::array<std::pair<int, int>, 5> origins{{{0, 0}, {0, far}, {far, 0}, {far, far}, {mid, mid}}};
  const std::array<CropPosition, 5> tags{CropPosition::kTopLeft, CropPosition::kTopRight, CropPosition::kBottomLeft,
                                         CropPosition::kBottomRight, CropPosition::kCenter};
  std::array<ImageView, 10> views;
  for (int i = 0; i < 5; ++i) {
    views[i] = crop_view(square, config, origins[i].first, origins[i].second, false, tags[i]);
    views[i + 5] = crop_view(square, config, origins[i].first, origins[i].second, true, tags[i]);
  }
  return views;
}

std::array<float, 3> channel_mean(const std::vector<Tensor>& images, ChannelOrder order) {
  require(!images.empty(), ErrorCode::kInvalidArgument, "channel mean of an empty image set");
  std::array<double, 3> sum{0, 0, 0};
  std::int64_t count = 0;
  for (const Tensor& img : images) {
    const std::int64_t plane = img.dim(1) * img.dim(2);
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (std::int64_t i = 0; i < plane; ++i) s += img[c * plane + i];
      sum[c] += s;
    }
    count += plane;
  }
  std::array<float, 3> mean;
  for (int c = 0; c < 3; ++c) {
    const int src = order == ChannelOrder::kRgb ? c : 2 - c;
    mean[c] = static_cast<float>(sum[src] / count);
  }
  return mean;
}

void write_mean_file(const std::array<float, 3>& mean, const std::string& path) {
  std::ostringstream os;
  os.precision(9);
  for (float m : mean) os << m << "\n";
  write_text_file(path, os.str());
}

std::array<float, 3> read_mean_file(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::array<float, 3> mean{};
  for (float& m : mean) {
    std::string tok;
    require(static_cast<bool>(in >> tok), ErrorCode::kData, "mean file '" + path + "' needs three values");
    m = static_cast<float>(parse_double(tok));
  }
  return mean;
}

Tensor stack_views(const std::vector<const Tensor*>& views) {
  require(!views.empty(), ErrorCode::kInvalidArgument, "cannot stack zero views");
  Shape shape{static_cast<std::int64_t>(views.size())};
  for (auto e : views[0]->shape()) shape.push_back(e);
  Tensor batch(shape);
  const std::int64_t per = views[0]->size();
  for (std::size_t i = 0; i < views.size(); ++i) {
    require(views[i]->shape() == views[0]->shape(), ErrorCode::kShapeMismatch, "views differ in shape");
    std::copy(views[i]->data().begin(), views[i]->data().end(), batch.raw() + static_cast<std::int64_t>(i) * per);
  }
  return batch;
}

// ---- Datasets ---------------------------------------------------------------

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<int> DatasetManifest::folds() const {
  std::vector<int> out;
  for (const auto& r : records) out.push_back(r.fold);
  return out;
}

int parse_label(const std::string& token) {
  const std::string t = trim(token);
  if (t == "positive" || t == "1") return 1;
  if (t == "negative" || t == "0") return 0;
  fail(ErrorCode::kData, "label '" + t + "' is not positive/negative/1/0");
}

DatasetManifest load_manifest(const std::string& path) {
  require(fs::exists(path), ErrorCode::kData, "manifest not found: " + path);
  const std::string text = read_text_file(path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<std::string> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  require(!lines.empty(), ErrorCode::kData, "manifest '" + path + "' is empty");

  const std::vector<std::string> header = split(trim(lines[0]), ',');
  int path_col = -1, label_col = -1, fold_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const std::string h = trim(header[i]);
    if (h == "path") path_col = i;
    else if (h == "label") label_col = i;
    else if (h == "fold") fold_col = i;
  }
  require(path_col >= 0 && label_col >= 0, ErrorCode::kData,
          path + ":1: header must name the columns path,label[,fold]");

  DatasetManifest m;
  m.has_folds = fold_col >= 0;
  const std::size_t width = header.size();
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string where = path + ":" + std::to_string(ln + 1);
    if (trim(lines[ln]).empty()) continue;
    const std::vector<std::string> cols = split(trim(lines[ln]), ',');
    require(cols.size() == width, ErrorCode::kData,
            where + ": expected " + std::to_string(width) + " columns, got " + std::to_string(cols.size()));
    ManifestRecord r;
    const std::string p = trim(cols[path_col]);
    require(!p.empty(), ErrorCode::kData, where + ": empty path");
    r.path = fs::path(p).is_absolute() ? p : (base / p).string();
    try {
      r.label = parse_label(cols[label_col]);
      if (m.has_folds) {
        r.fold = parse_int(trim(cols[fold_col]));
        require(r.fold >= 0, ErrorCode::kData, "negative fold");
      }
    } catch (const Error& e) {
      fail(ErrorCode::kData, where + ": " + e.what());
    }
    require(fs::exists(r.path), ErrorCode::kData, where + ": image not found: " + r.path);
    (r.label ? m.positives : m.negatives)++;
    m.records.push_back(std::move(r));
  }
  require(!m.records.empty(), ErrorCode::kData, "manifest '" + path + "' has no records");
  if (m.has_folds) {
    int k = 0;
    for (const auto& r : m.records) k = std::max(k, r.fold + 1);
    std::vector<bool> seen(k, false);
    for (const auto& r : m.records) seen[r.fold] = true;
    for (int f = 0; f < k; ++f)
      require(seen[f], ErrorCode::kData, path + ": fold " + std::to_string(f) + " has no records");
    m.num_folds = k;
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path, bool write_folds) {
  const fs::path base = fs::path(path).parent_path();
  std::string out = write_folds ? "path,label,fold\n" : "path,label\n";
  for (const auto& r : manifest.records) {
    std::string p = r.path;
    if (!base.empty() && starts_with(p, base.string() + "/")) p = p.substr(base.string().size() + 1);
    out += p + "," + (r.label ? "positive" : "negative");
    if (write_folds) out += "," + std::to_string(r.fold);
    out += "\n";
  }
  write_text_file(path, out);
}

LabeledImages LabeledImages::subset(const std::vector<int>& indices) const {
  LabeledImages out;
  for (int i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

LabeledImages load_images(const DatasetManifest& manifest, int resize_to) {
  LabeledImages out;
  for (const auto& r : manifest.records) {
    out.images.push_back(resize_square(load_image(r.path), resize_to));
    out.labels.push_back(r.label);
  }
  return out;
}

std::vector<int> stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::kInvalidArgument, "k must be at least 2");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, idx] : by_class)
    require(static_cast<int>(idx.size()) >= k, ErrorCode::kData,
            "class " + std::to_string(label) + " has " + std::to_string(idx.size()) + " members, fewer than k=" +
                std::to_string(k));
  std::vector<int> folds(labels.size(), -1);
  std::mt19937_64 rng(seed);
  int next = 0;  // continue dealing across classes so fold sizes differ by at most one
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i : idx) {
      folds[i] = next;
      next = (next + 1) % k;
    }
  }
  return folds;
}

std::vector<int> fold_indices(const std::vector<int>& folds, int f, bool test) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(folds.size()); ++i)
    if ((folds[i] == f) == test) out.push_back(i);
  return out;
}

}  // namespace convprobe
