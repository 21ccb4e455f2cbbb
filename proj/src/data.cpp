#include "vdmask/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "vdmask/rng.hpp"

namespace vdm {

namespace fs = std::filesystem;
using nlohmann::json;

void GridSpec::validate() const {
  if (grid_g < 1 || patch_px < 1) {
    throw ContractError("grid spec: grid_g and patch_px must be positive");
  }
  if (channels != 3) throw ContractError("grid spec: only RGB supported");
  for (std::size_t i = 0; i < distractors.size(); ++i) {
    if (distractors[i] == red) {
      throw ContractError("grid spec: distractor " + std::to_string(i) +
                          " equals the target color");
    }
    for (std::size_t j = i + 1; j < distractors.size(); ++j) {
      if (distractors[i] == distractors[j]) {
        throw ContractError("grid spec: distractors must be pairwise distinct");
      }
    }
  }
}

namespace {

void fill_patch(std::vector<std::uint8_t>& pixels, const GridSpec& spec,
                int patch, const Color& c) {
  int g = spec.grid_g, ps = spec.patch_px, size = spec.image_size();
  int py = patch / g, px = patch % g;
  for (int y = 0; y < ps; ++y) {
    std::uint8_t* row =
        pixels.data() + (static_cast<std::size_t>(py * ps + y) * size + px * ps) * 3;
    for (int x = 0; x < ps; ++x) {
      row[x * 3 + 0] = c[0];
      row[x * 3 + 1] = c[1];
      row[x * 3 + 2] = c[2];
    }
  }
}

}  // namespace

std::vector<LabeledImage> gen_counting_dataset(std::uint64_t seed, int count,
                                               const GridSpec& spec) {
  spec.validate();
  if (count <= 0) throw ContractError("gen_counting_dataset: count must be > 0");
  Rng root(seed);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  int np = spec.n_patches();
  for (int i = 0; i < count; ++i) {
    Rng rng = root.derive(static_cast<std::uint64_t>(i));
    LabeledImage img;
    img.label = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(np + 1)));
    std::vector<int> order(static_cast<std::size_t>(np));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    img.red_set.assign(order.begin(), order.begin() + img.label);
    std::sort(img.red_set.begin(), img.red_set.end());
    img.pixels.assign(static_cast<std::size_t>(spec.image_size()) *
                          spec.image_size() * 3,
                      0);
    std::size_t next_red = 0;
    for (int p = 0; p < np; ++p) {
      bool is_red = next_red < img.red_set.size() && img.red_set[next_red] == p;
      if (is_red) {
        fill_patch(img.pixels, spec, p, spec.red);
        ++next_red;
      } else {
        fill_patch(img.pixels, spec, p,
                   spec.distractors[rng.bounded(6)]);
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<int> recover_red_set(const LabeledImage& img, const GridSpec& spec) {
  int g = spec.grid_g, ps = spec.patch_px, size = spec.image_size();
  std::vector<int> red;
  for (int p = 0; p < spec.n_patches(); ++p) {
    int py = p / g, px = p % g;
    bool all_red = true;
    for (int y = 0; y < ps && all_red; ++y) {
      const std::uint8_t* row =
          img.pixels.data() +
          (static_cast<std::size_t>(py * ps + y) * size + px * ps) * 3;
      for (int x = 0; x < ps; ++x) {
        if (row[x * 3] != spec.red[0] || row[x * 3 + 1] != spec.red[1] ||
            row[x * 3 + 2] != spec.red[2]) {
          all_red = false;
          break;
        }
      }
    }
    if (all_red) red.push_back(p);
  }
  return red;
}

std::vector<float> normalize_image(const std::vector<std::uint8_t>& bytes) {
  std::vector<float> out(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[i] = (bytes[i] / 255.0f - 0.5f) / 0.5f;
  }
  return out;
}

std::vector<std::uint8_t> denormalize_image(const std::vector<float>& values) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    float v = (values[i] * 0.5f + 0.5f) * 255.0f;
    v = std::min(std::max(v, 0.0f), 255.0f);
    out[i] = static_cast<std::uint8_t>(std::floor(v + 0.5f));
  }
  return out;
}

namespace {

struct Reader {
  std::ifstream in;
  std::size_t offset = 0;

  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw ParseError("cannot open " + path, 0);
  }

  int get() {
    int c = in.get();
    if (c != EOF) ++offset;
    return c;
  }

  // next non-whitespace char, skipping '#' comments
  int token_char() {
    int c = get();
    while (c != EOF) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = get();
      } else if (std::isspace(c)) {
        c = get();
      } else {
        break;
      }
    }
    return c;
  }

  int read_int() {
    int c = token_char();
    if (c == EOF || !std::isdigit(c)) {
      throw ParseError("expected integer in pnm header", offset);
    }
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
      v = v * 10 + (c - '0');
      c = get();
    }
    if (c != EOF && !std::isspace(c)) {
      throw ParseError("malformed integer in pnm header", offset);
    }
    return v;
  }
};

}  // namespace

PnmImage load_pnm(const std::string& path) {
  Reader r(path);
  int m0 = r.get(), m1 = r.get();
  PnmImage img;
  if (m0 == 'P' && m1 == '6') {
    img.channels = 3;
  } else if (m0 == 'P' && m1 == '5') {
    img.channels = 1;
  } else {
    throw ParseError("not a binary P5/P6 pixmap", 0);
  }
  img.width = r.read_int();
  img.height = r.read_int();
  int maxval = r.read_int();
  if (maxval != 255) throw ParseError("pnm maxval must be 255", r.offset);
  if (img.width <= 0 || img.height <= 0) {
    throw ParseError("pnm dimensions must be positive", r.offset);
  }
  std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  r.in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(r.in.gcount()) != n) {
    throw ParseError("pnm payload truncated", r.offset + static_cast<std::size_t>(r.in.gcount()));
  }
  return img;
}

namespace {

void save_pnm(const std::string& path, const char* magic, int width, int height,
              int channels, const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ContractError("save_pnm: pixel buffer does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("save_pnm: cannot open " + path);
  out << magic << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
}

}  // namespace

void save_ppm(const std::string& path, int width, int height,
              const std::vector<std::uint8_t>& rgb) {
  save_pnm(path, "P6", width, height, 3, rgb);
}

void save_pgm(const std::string& path, int width, int height,
              const std::vector<std::uint8_t>& gray) {
  save_pnm(path, "P5", width, height, 1, gray);
}

std::vector<std::uint8_t> saliency_to_bytes(const std::vector<float>& saliency) {
  std::vector<std::uint8_t> out(saliency.size());
  for (std::size_t i = 0; i < saliency.size(); ++i) {
    float v = std::min(std::max(saliency[i], 0.0f), 1.0f) * 255.0f;
    out[i] = static_cast<std::uint8_t>(std::floor(v + 0.5f));
  }
  return out;
}

void write_split(const std::string& dir, const std::string& split,
                 const std::vector<LabeledImage>& images) {
  fs::create_directories(fs::path(dir) / split);
  std::ofstream manifest(fs::path(dir) / (split + ".jsonl"));
  if (!manifest) throw ContractError("write_split: cannot write manifest in " + dir);
  int size = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "img_%05zu.ppm", i);
    std::string rel = split + "/" + name;
    const auto& img = images[i];
    size = static_cast<int>(std::lround(
        std::sqrt(static_cast<double>(img.pixels.size() / 3))));
    save_ppm((fs::path(dir) / rel).string(), size, size, img.pixels);
    json row{{"file", rel}, {"label", img.label}, {"red_set", img.red_set}};
    manifest << row.dump() << "\n";
  }
}

std::vector<LabeledImage> load_split(const std::string& dir,
                                     const std::string& split) {
  std::ifstream manifest(fs::path(dir) / (split + ".jsonl"));
  if (!manifest) {
    throw ContractError("load_split: missing manifest " + split + ".jsonl in " + dir);
  }
  std::vector<LabeledImage> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    LabeledImage img;
    img.label = row.at("label").get<int>();
    img.red_set = row.at("red_set").get<std::vector<int>>();
    auto pnm = load_pnm((fs::path(dir) / row.at("file").get<std::string>()).string());
    if (pnm.channels != 3) {
      throw ParseError("dataset image must be P6", 0);
    }
    img.pixels = std::move(pnm.pixels);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace vdm
