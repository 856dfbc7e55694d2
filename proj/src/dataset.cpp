#include "discnet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "discnet/augment.hpp"

namespace fs = std::filesystem;

namespace discnet {

GrayImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image '" + path + "'");
  std::string magic;
  f >> magic;
  if (magic != "P5") throw DataError("'" + path + "' is not a binary PGM (P5) file");

  auto next_token = [&]() -> int64_t {
    // skip whitespace and '#' comments
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    int64_t v;
    if (!(f >> v)) throw DataError("malformed PGM header in '" + path + "'");
    return v;
  };

  const int64_t w = next_token();
  const int64_t h = next_token();
  const int64_t maxval = next_token();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw DataError("invalid PGM dimensions in '" + path + "'");
  }
  f.get();  // single whitespace after maxval

  GrayImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w * h));
  const bool wide = maxval > 255;
  const size_t nbytes = static_cast<size_t>(w * h) * (wide ? 2 : 1);
  std::vector<unsigned char> raw(nbytes);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
  if (static_cast<size_t>(f.gcount()) != nbytes) {
    throw DataError("truncated PGM payload in '" + path + "'");
  }
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const int64_t v = wide ? (static_cast<int64_t>(raw[2 * i]) << 8) | raw[2 * i + 1]
                           : raw[i];
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write image '" + path + "'");
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double p : img.pixels) {
    const double c = std::clamp(p, 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
}

namespace {

const char* label_name(Label l) { return l == Label::Ldh ? "ldh" : "healthy"; }

Label parse_label(const std::string& s, const std::string& pid) {
  if (s == "ldh") return Label::Ldh;
  if (s == "healthy") return Label::Healthy;
  throw DataError("patient '" + pid + "': unknown label '" + s + "'");
}

}  // namespace

std::vector<PatientStudy> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "' does not parse: " + e.what());
  }
  if (!doc.is_array()) throw DataError("manifest root must be an array of studies");

  const fs::path base = fs::path(path).parent_path();
  std::map<std::string, std::string> marker_of_patient;
  std::vector<PatientStudy> out;
  for (const auto& entry : doc) {
    PatientStudy st;
    try {
      st.patient_id = entry.at("patient_id").get<std::string>();
      st.group_marker = entry.at("group_marker").get<std::string>();
      st.label = parse_label(entry.at("label").get<std::string>(), st.patient_id);
      if (entry.contains("age") && !entry["age"].is_null()) st.age = entry["age"].get<int>();
      const auto& images = entry.at("images");
      if (images.size() != 3) {
        throw DataError("patient '" + st.patient_id + "': images must carry exactly t1_sag, t2_sag, t2_ax");
      }
      for (const char* tag : {"t1_sag", "t2_sag", "t2_ax"}) {
        if (!images.contains(tag)) {
          throw DataError("patient '" + st.patient_id + "': missing modality '" + tag + "'");
        }
      }
      st.t1_sag = read_pgm((base / images.at("t1_sag").get<std::string>()).string());
      st.t2_sag = read_pgm((base / images.at("t2_sag").get<std::string>()).string());
      st.t2_ax = read_pgm((base / images.at("t2_ax").get<std::string>()).string());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest entry for patient '" + st.patient_id + "' is malformed: " + e.what());
    }
    auto it = marker_of_patient.find(st.patient_id);
    if (it == marker_of_patient.end()) {
      marker_of_patient[st.patient_id] = st.group_marker;
    } else if (it->second != st.group_marker) {
      throw DataError("patient '" + st.patient_id + "' appears with two different group markers");
    }
    out.push_back(std::move(st));
  }
  return out;
}

std::string write_dataset(const std::string& out_dir, const std::vector<PatientStudy>& studies) {
  const fs::path dir(out_dir);
  fs::create_directories(dir / "images");
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  std::map<std::string, int> seen;  // disambiguates repeat studies of a patient
  for (const auto& st : studies) {
    const int k = seen[st.patient_id]++;
    const std::string stem = st.patient_id + (k ? "_" + std::to_string(k) : "");
    nlohmann::ordered_json entry;
    entry["patient_id"] = st.patient_id;
    entry["group_marker"] = st.group_marker;
    entry["label"] = label_name(st.label);
    if (st.age) entry["age"] = *st.age;
    nlohmann::ordered_json images;
    const std::array<std::pair<const char*, const GrayImage*>, 3> mods = {
        {{"t1_sag", &st.t1_sag}, {"t2_sag", &st.t2_sag}, {"t2_ax", &st.t2_ax}}};
    for (const auto& [tag, img] : mods) {
      const std::string rel = "images/" + stem + "_" + tag + ".pgm";
      write_pgm((dir / rel).string(), *img);
      images[tag] = rel;
    }
    entry["images"] = std::move(images);
    doc.push_back(std::move(entry));
  }
  const std::string manifest = (dir / "manifest.json").string();
  std::ofstream f(manifest);
  if (!f) throw DataError("cannot write manifest '" + manifest + "'");
  f << doc.dump(2) << "\n";
  return manifest;
}

SplitPlan split_folds(const std::vector<PatientStudy>& studies, int folds,
                      double val_fraction, uint64_t seed) {
  if (folds < 1) throw std::invalid_argument("split_folds: folds must be >= 1");
  if (folds == 1 && (val_fraction <= 0.0 || val_fraction >= 1.0)) {
    throw std::invalid_argument("split_folds: val_fraction must lie in (0,1)");
  }

  // Unique markers with their (consistent) label.
  std::map<std::string, Label> label_of;
  std::vector<std::string> order;  // first-appearance order
  for (const auto& st : studies) {
    auto it = label_of.find(st.group_marker);
    if (it == label_of.end()) {
      label_of[st.group_marker] = st.label;
      order.push_back(st.group_marker);
    } else if (it->second != st.label) {
      throw DataError("marker '" + st.group_marker + "' carries conflicting labels");
    }
  }
  std::vector<std::string> pos, neg;
  for (const auto& m : order) (label_of[m] == Label::Ldh ? pos : neg).push_back(m);

  const int parts = std::max(folds, 2);
  if (folds >= 2 &&
      (static_cast<int>(pos.size()) < folds || static_cast<int>(neg.size()) < folds)) {
    throw DataError("split_folds: too few patients per class to stratify into " +
                    std::to_string(folds) + " folds");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  SplitPlan plan;
  plan.folds.resize(static_cast<size_t>(folds));
  auto assign = [&](const std::vector<std::string>& markers) {
    for (size_t i = 0; i < markers.size(); ++i) {
      size_t val_fold;
      if (folds >= 2) {
        val_fold = i % static_cast<size_t>(folds);
      } else {
        const size_t n_val = std::max<size_t>(
            1, static_cast<size_t>(std::llround(val_fraction * static_cast<double>(markers.size()))));
        val_fold = i < n_val ? 0 : static_cast<size_t>(-1);
      }
      for (size_t fidx = 0; fidx < plan.folds.size(); ++fidx) {
        (fidx == val_fold ? plan.folds[fidx].validation : plan.folds[fidx].train)
            .push_back(markers[i]);
      }
    }
  };
  (void)parts;
  assign(pos);
  assign(neg);
  for (const auto& fold : plan.folds) {
    if (fold.validation.empty() || fold.train.empty()) {
      throw DataError("split_folds: a fold has an empty train or validation set");
    }
  }
  return plan;
}

std::vector<PatientStudy> studies_with_markers(const std::vector<PatientStudy>& studies,
                                               const std::vector<std::string>& markers) {
  std::vector<PatientStudy> out;
  for (const auto& st : studies) {
    if (std::find(markers.begin(), markers.end(), st.group_marker) != markers.end()) {
      out.push_back(st);
    }
  }
  return out;
}

namespace {

struct PhantomScene {
  int64_t band_lo, band_hi;       // vertical band columns
  std::vector<int64_t> gap_rows;  // disc gap center rows
  double band_gain, base_gain;    // label-independent intensity jitter
  int64_t bulge_gap = -1;         // index into gap_rows
  bool posterior = false;         // blob side; the posterior side marks LDH
  double bulge_rx, bulge_ry;
};

void render_sagittal(GrayImage& img, const PhantomScene& sc, double band_level,
                     double gap_level, double bg_level, double bulge_level) {
  const int64_t S = img.height;
  for (int64_t y = 0; y < S; ++y)
    for (int64_t x = 0; x < S; ++x) {
      double v = bg_level;
      if (x >= sc.band_lo && x <= sc.band_hi) {
        v = band_level;
        for (int64_t gr : sc.gap_rows) {
          if (std::llabs(y - gr) <= S / 32 + 1) v = gap_level;
        }
      }
      img.at(y, x) = std::clamp(v * sc.band_gain * sc.base_gain, 0.0, 1.0);
    }
  if (sc.bulge_gap >= 0) {
    const int64_t gy = sc.gap_rows[static_cast<size_t>(sc.bulge_gap)];
    // Every study carries one blob; only LDH places it on the posterior side,
    // so pooled intensity statistics stay class-independent.
    const int64_t gx = sc.posterior ? sc.band_hi + static_cast<int64_t>(sc.bulge_rx)
                                    : sc.band_lo - static_cast<int64_t>(sc.bulge_rx);
    for (int64_t y = 0; y < S; ++y)
      for (int64_t x = 0; x < S; ++x) {
        const double dx = (static_cast<double>(x) - static_cast<double>(gx)) / sc.bulge_rx;
        const double dy = (static_cast<double>(y) - static_cast<double>(gy)) / sc.bulge_ry;
        if (dx * dx + dy * dy <= 1.0) {
          img.at(y, x) = std::clamp(bulge_level * sc.base_gain, 0.0, 1.0);
        }
      }
  }
}

void render_axial(GrayImage& img, const PhantomScene& sc, double disc_level,
                  double bg_level, double bulge_level) {
  const int64_t S = img.height;
  const double cx = static_cast<double>(S) / 2.0, cy = static_cast<double>(S) / 2.0;
  const double r = static_cast<double>(sc.band_hi - sc.band_lo + 1) * 1.2;
  for (int64_t y = 0; y < S; ++y)
    for (int64_t x = 0; x < S; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      double v = (dx * dx + dy * dy <= r * r) ? disc_level : bg_level;
      img.at(y, x) = std::clamp(v * sc.band_gain * sc.base_gain, 0.0, 1.0);
    }
  if (sc.bulge_gap >= 0) {
    // herniation shows at the lower (posterior) rim; the healthy decoy blob
    // sits at the upper (anterior) rim
    const double bx = cx + (sc.bulge_gap % 2 == 0 ? -0.35 : 0.35) * r;
    const double by = sc.posterior ? cy + r : cy - r;
    for (int64_t y = 0; y < S; ++y)
      for (int64_t x = 0; x < S; ++x) {
        const double dx = (static_cast<double>(x) - bx) / sc.bulge_rx;
        const double dy = (static_cast<double>(y) - by) / sc.bulge_ry;
        if (dx * dx + dy * dy <= 1.0) {
          img.at(y, x) = std::clamp(bulge_level * sc.base_gain, 0.0, 1.0);
        }
      }
  }
}

void add_pixel_noise(GrayImage& img, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& p : img.pixels) p = std::clamp(p + noise(rng), 0.0, 1.0);
}

}  // namespace

std::vector<PatientStudy> generate_phantom(int n_patients, double prevalence,
                                           uint64_t seed, int64_t image_size) {
  if (n_patients < 4) throw std::invalid_argument("generate_phantom: need at least 4 patients");
  if (prevalence <= 0.0 || prevalence >= 1.0) {
    throw std::invalid_argument("generate_phantom: prevalence must lie in (0,1)");
  }
  if (image_size < 32) throw std::invalid_argument("generate_phantom: image_size must be >= 32");

  const int n_pos = static_cast<int>(std::llround(prevalence * n_patients));
  std::vector<PatientStudy> out;
  out.reserve(static_cast<size_t>(n_patients));

  for (int i = 0; i < n_patients; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int64_t S = image_size;
    PhantomScene sc;
    const int64_t band_w = S / 8 + static_cast<int64_t>(unit(rng) * static_cast<double>(S) / 16.0);
    const int64_t band_c = S / 2 + static_cast<int64_t>((unit(rng) - 0.5) * static_cast<double>(S) / 8.0);
    sc.band_lo = band_c - band_w / 2;
    sc.band_hi = sc.band_lo + band_w;
    const int64_t n_gaps = 5;
    const int64_t pitch = S / (n_gaps + 1);
    const int64_t phase = static_cast<int64_t>(unit(rng) * static_cast<double>(pitch) / 2.0);
    for (int64_t g = 1; g <= n_gaps; ++g) sc.gap_rows.push_back(g * pitch + phase);
    // label-independent jitter keeps intensity statistics uninformative
    sc.band_gain = 0.85 + 0.3 * unit(rng);
    sc.base_gain = 0.85 + 0.3 * unit(rng);
    sc.bulge_rx = static_cast<double>(S) / 18.0 + unit(rng) * static_cast<double>(S) / 24.0;
    sc.bulge_ry = static_cast<double>(S) / 22.0 + unit(rng) * static_cast<double>(S) / 28.0;

    const bool positive = i < n_pos;
    // one of the two lowest disc positions, for both classes; the label is
    // carried by the blob's side alone
    sc.bulge_gap = static_cast<int64_t>(sc.gap_rows.size()) - 1 - (unit(rng) < 0.5 ? 0 : 1);
    sc.posterior = positive;

    PatientStudy st;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%04d", i);
    st.patient_id = buf;
    std::snprintf(buf, sizeof(buf), "g%04d", i);
    st.group_marker = buf;
    st.label = positive ? Label::Ldh : Label::Healthy;
    st.age = 20 + static_cast<int>(unit(rng) * 70.0);

    auto blank = [S] {
      GrayImage img;
      img.height = img.width = S;
      img.pixels.assign(static_cast<size_t>(S * S), 0.0);
      return img;
    };
    st.t1_sag = blank();
    st.t2_sag = blank();
    st.t2_ax = blank();
    // modality-specific contrast over the same geometry
    render_sagittal(st.t1_sag, sc, 0.70, 0.30, 0.10, 0.62);
    render_sagittal(st.t2_sag, sc, 0.45, 0.65, 0.08, 0.85);
    render_axial(st.t2_ax, sc, 0.55, 0.10, 0.85);
    add_pixel_noise(st.t1_sag, rng, 0.03);
    add_pixel_noise(st.t2_sag, rng, 0.03);
    add_pixel_noise(st.t2_ax, rng, 0.03);
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace discnet
