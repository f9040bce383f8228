#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srnn/error.hpp"
#include "srnn/linalg.hpp"
#include "srnn/rng.hpp"

namespace srnn {

using json = nlohmann::json;

struct AlbumItem {
  std::string image_id;
  std::int64_t timestamp = 0;
  Vector feature;
};

// One photo album: items sorted by capture timestamp.
struct Album {
  std::string id;
  std::vector<AlbumItem> items;

  std::size_t size() const noexcept { return items.size(); }
  const Vector& feature(std::size_t i) const { return items[i].feature; }
};

struct Dataset {
  std::string concept_name;
  std::size_t dim = 0;
  std::vector<Album> albums;
};

// Ground truth for synthetic data: per-item planted state label (1..L, or 0
// for a distractor) and the planted summary (medoid per state run, 0-based).
struct AlbumTruth {
  std::vector<int> labels;
  std::vector<std::size_t> summary;
};

struct PlantedTruth {
  std::size_t num_states = 0;
  std::map<std::string, AlbumTruth> albums;
};

struct SyntheticSpec {
  std::size_t num_states = 10;     // L, planted states per album
  std::size_t dim = 32;            // feature dimension
  double prototype_noise = 0.0;    // per-album jitter of the concept prototypes
  double emission_noise = 0.1;     // per-image noise around the state prototype
  std::size_t repeats_min = 5;     // images per state run, inclusive bounds
  std::size_t repeats_max = 20;
  double distractor_prob = 0.2;    // chance each emitted slot is a distractor
  std::size_t num_albums = 200;
  std::uint64_t seed = 1;

  void validate() const {
    require(num_states >= 1, ErrorCode::config, "num_states must be at least 1");
    require(dim >= 1, ErrorCode::config, "dim must be at least 1");
    require(repeats_min >= 1, ErrorCode::config, "repeats_min must be at least 1");
    require(repeats_min <= repeats_max, ErrorCode::config,
            "repeats_min exceeds repeats_max");
    require(distractor_prob >= 0.0 && distractor_prob < 1.0, ErrorCode::config,
            "distractor_prob must lie in [0, 1)");
    require(prototype_noise >= 0.0, ErrorCode::config, "prototype_noise must be >= 0");
    require(emission_noise >= 0.0, ErrorCode::config, "emission_noise must be >= 0");
    require(num_albums >= 1, ErrorCode::config, "num_albums must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Binary feature files. Layout: magic "SRNF", u32 version = 1, u32 dim,
// u32 count, then count*dim float32 values, everything little-endian.

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, ErrorCode::corrupt_format, "truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& out, float v) {
  write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float read_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(read_u32(in, what));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t read_u64(std::istream& in, const std::string& what) {
  const std::uint64_t lo = read_u32(in, what);
  const std::uint64_t hi = read_u32(in, what);
  return lo | (hi << 32);
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_u64(in, what));
}

// Round through float32 so in-memory features match what a feature file
// round-trip would produce bit for bit.
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace detail

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline void write_feature_file(const std::string& path, const std::vector<Vector>& rows) {
  require(!rows.empty(), ErrorCode::invalid_argument, "feature file needs at least one row");
  const std::size_t dim = rows.front().size();
  require(dim > 0, ErrorCode::invalid_argument, "feature rows must be non-empty");
  for (const Vector& row : rows)
    require(row.size() == dim, ErrorCode::dimension_mismatch,
            "feature rows disagree on dimension");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path + " for writing");
  out.write("SRNF", 4);
  detail::write_u32(out, kFeatureFileVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(dim));
  detail::write_u32(out, static_cast<std::uint32_t>(rows.size()));
  for (const Vector& row : rows)
    for (double x : row) detail::write_f32(out, static_cast<float>(x));
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

inline std::vector<Vector> read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open feature file " + path);
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::string(magic, 4) == "SRNF", ErrorCode::corrupt_format,
          path + ": bad magic, not a feature file");
  const std::uint32_t version = detail::read_u32(in, path + " header");
  require(version == kFeatureFileVersion, ErrorCode::corrupt_format,
          path + ": unsupported feature file version " + std::to_string(version));
  const std::uint32_t dim = detail::read_u32(in, path + " header");
  const std::uint32_t count = detail::read_u32(in, path + " header");
  require(dim > 0 && count > 0, ErrorCode::corrupt_format,
          path + ": empty dimension or row count");
  std::vector<Vector> rows(count, Vector(dim));
  for (auto& row : rows)
    for (double& x : row) {
      x = static_cast<double>(detail::read_f32(in, path + " payload"));
      require(std::isfinite(x), ErrorCode::corrupt_format, path + ": non-finite feature value");
    }
  // Nothing may trail the payload.
  in.peek();
  require(in.eof(), ErrorCode::corrupt_format, path + ": trailing bytes after payload");
  return rows;
}

// ---------------------------------------------------------------------------
// Manifest + truth JSON.

namespace detail {

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path);
  json parsed = json::parse(in, nullptr, false);
  require(!parsed.is_discarded(), ErrorCode::corrupt_format, path + ": invalid JSON");
  return parsed;
}

inline std::int64_t parse_timestamp(const json& value, const std::string& where) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_string()) {
    const std::string s = value.get<std::string>();
    std::size_t used = 0;
    try {
      const long long parsed = std::stoll(s, &used);
      if (used == s.size()) return parsed;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::timestamp_parse, where + ": cannot parse timestamp '" + s + "'");
  }
  throw Error(ErrorCode::timestamp_parse, where + ": timestamp must be an integer");
}

}  // namespace detail

// Load a dataset from its manifest. Feature file paths are resolved relative
// to the manifest's directory; albums are sorted by timestamp (stable, so
// file order breaks ties).
inline Dataset load_dataset(const std::string& manifest_path) {
  const json manifest = detail::parse_json_file(manifest_path);
  require(manifest.is_object(), ErrorCode::corrupt_format, manifest_path + ": manifest must be an object");
  require(manifest.contains("concept") && manifest["concept"].is_string(),
          ErrorCode::corrupt_format, manifest_path + ": missing string field 'concept'");
  require(manifest.contains("albums") && manifest["albums"].is_array(),
          ErrorCode::corrupt_format, manifest_path + ": missing array field 'albums'");

  Dataset ds;
  ds.concept_name = manifest["concept"].get<std::string>();
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

  std::unordered_map<std::string, std::vector<Vector>> file_cache;
  std::unordered_map<std::string, bool> seen_ids;

  for (const json& entry : manifest["albums"]) {
    require(entry.is_object(), ErrorCode::corrupt_format, manifest_path + ": album entry must be an object");
    require(entry.contains("id") && entry["id"].is_string(), ErrorCode::corrupt_format,
            manifest_path + ": album entry missing string field 'id'");
    Album album;
    album.id = entry["id"].get<std::string>();
    require(!seen_ids[album.id], ErrorCode::corrupt_format,
            manifest_path + ": duplicate album id '" + album.id + "'");
    seen_ids[album.id] = true;

    require(entry.contains("feature_file") && entry["feature_file"].is_string(),
            ErrorCode::corrupt_format, "album '" + album.id + "' missing 'feature_file'");
    const std::string feature_rel = entry["feature_file"].get<std::string>();
    const std::string feature_path = (base / feature_rel).string();
    auto cached = file_cache.find(feature_path);
    if (cached == file_cache.end())
      cached = file_cache.emplace(feature_path, read_feature_file(feature_path)).first;
    const std::vector<Vector>& rows = cached->second;

    if (ds.dim == 0) ds.dim = rows.front().size();
    require(rows.front().size() == ds.dim, ErrorCode::dimension_mismatch,
            feature_path + ": dimension " + std::to_string(rows.front().size()) +
                " does not match dataset dimension " + std::to_string(ds.dim));

    require(entry.contains("items") && entry["items"].is_array() && !entry["items"].empty(),
            ErrorCode::corrupt_format, "album '" + album.id + "' has no items");
    for (const json& item : entry["items"]) {
      require(item.is_object(), ErrorCode::corrupt_format,
              "album '" + album.id + "': item must be an object");
      require(item.contains("image_id") && item["image_id"].is_string(),
              ErrorCode::corrupt_format, "album '" + album.id + "': item missing 'image_id'");
      require(item.contains("timestamp"), ErrorCode::corrupt_format,
              "album '" + album.id + "': item missing 'timestamp'");
      require(item.contains("row") && item["row"].is_number_unsigned(),
              ErrorCode::corrupt_format, "album '" + album.id + "': item missing row index");
      AlbumItem ai;
      ai.image_id = item["image_id"].get<std::string>();
      ai.timestamp = detail::parse_timestamp(item["timestamp"],
                                             "album '" + album.id + "' image '" + ai.image_id + "'");
      const std::size_t row = item["row"].get<std::size_t>();
      require(row < rows.size(), ErrorCode::corrupt_format,
              "album '" + album.id + "': row " + std::to_string(row) + " out of range for " +
                  feature_path);
      ai.feature = rows[row];
      album.items.push_back(std::move(ai));
    }
    std::stable_sort(album.items.begin(), album.items.end(),
                     [](const AlbumItem& a, const AlbumItem& b) { return a.timestamp < b.timestamp; });
    ds.albums.push_back(std::move(album));
  }
  require(!ds.albums.empty(), ErrorCode::corrupt_format, manifest_path + ": no albums");
  return ds;
}

// Write a dataset as one feature file per album plus manifest.json in dir.
// Returns the manifest path.
inline std::string write_dataset(const Dataset& ds, const std::string& dir) {
  require(!ds.albums.empty(), ErrorCode::invalid_argument, "write_dataset: empty dataset");
  std::filesystem::create_directories(dir);
  json albums = json::array();
  for (const Album& album : ds.albums) {
    const std::string feature_rel = album.id + ".srnf";
    std::vector<Vector> rows;
    rows.reserve(album.size());
    for (const AlbumItem& item : album.items) rows.push_back(item.feature);
    write_feature_file((std::filesystem::path(dir) / feature_rel).string(), rows);
    json items = json::array();
    for (std::size_t i = 0; i < album.items.size(); ++i) {
      items.push_back({{"image_id", album.items[i].image_id},
                       {"timestamp", album.items[i].timestamp},
                       {"row", i}});
    }
    albums.push_back({{"id", album.id}, {"feature_file", feature_rel}, {"items", items}});
  }
  const json manifest = {{"concept", ds.concept_name}, {"albums", albums}};
  const std::string manifest_path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + manifest_path + " for writing");
  out << manifest.dump(2) << "\n";
  require(out.good(), ErrorCode::io, "write failed for " + manifest_path);
  return manifest_path;
}

// Truth files map album id -> {labels, summary}; summaries are stored
// 1-based on disk, 0-based in memory.
inline void write_truth(const PlantedTruth& truth, const std::string& path) {
  json albums = json::object();
  for (const auto& [id, at] : truth.albums) {
    json summary = json::array();
    for (std::size_t idx : at.summary) summary.push_back(idx + 1);
    albums[id] = {{"labels", at.labels}, {"summary", summary}};
  }
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot open " + path + " for writing");
  out << albums.dump(2) << "\n";
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

inline PlantedTruth load_truth(const std::string& path) {
  const json parsed = detail::parse_json_file(path);
  require(parsed.is_object(), ErrorCode::corrupt_format, path + ": truth must be an object");
  PlantedTruth truth;
  for (const auto& [id, entry] : parsed.items()) {
    require(entry.is_object() && entry.contains("labels") && entry.contains("summary"),
            ErrorCode::corrupt_format, path + ": album '" + id + "' missing labels or summary");
    AlbumTruth at;
    for (const json& label : entry["labels"]) {
      require(label.is_number_integer(), ErrorCode::corrupt_format,
              path + ": album '" + id + "' has a non-integer label");
      const int l = label.get<int>();
      require(l >= 0, ErrorCode::corrupt_format, path + ": negative state label");
      at.labels.push_back(l);
    }
    for (const json& s : entry["summary"]) {
      require(s.is_number_unsigned() && s.get<std::size_t>() >= 1, ErrorCode::corrupt_format,
              path + ": summary indices are 1-based positive integers");
      const std::size_t idx = s.get<std::size_t>() - 1;
      require(idx < at.labels.size(), ErrorCode::corrupt_format,
              path + ": summary index out of range for album '" + id + "'");
      at.summary.push_back(idx);
    }
    truth.albums.emplace(id, std::move(at));
  }
  for (const auto& [id, at] : truth.albums)
    for (int l : at.labels)
      truth.num_states = std::max(truth.num_states, static_cast<std::size_t>(l));
  return truth;
}

// ---------------------------------------------------------------------------

// Deterministic train/validation partition. The train side gets
// round(ratio * count) albums, clamped so neither side is empty; original
// dataset order is preserved within each side.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double ratio,
                                                   RngStream& rng) {
  require(ds.albums.size() >= 2, ErrorCode::invalid_argument,
          "split needs at least two albums");
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::invalid_argument,
          "split ratio must lie strictly between 0 and 1");
  const std::size_t count = ds.albums.size();
  std::size_t train_count =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(count)));
  train_count = std::clamp<std::size_t>(train_count, 1, count - 1);

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + train_count);
  std::vector<std::size_t> val_idx(order.begin() + train_count, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  Dataset train, val;
  train.concept_name = val.concept_name = ds.concept_name;
  train.dim = val.dim = ds.dim;
  for (std::size_t i : train_idx) train.albums.push_back(ds.albums[i]);
  for (std::size_t i : val_idx) val.albums.push_back(ds.albums[i]);
  return {std::move(train), std::move(val)};
}

// Returns a copy with every feature scaled to unit Euclidean norm.
inline Dataset l2_normalize(const Dataset& ds) {
  Dataset out = ds;
  for (Album& album : out.albums)
    for (AlbumItem& item : album.items) {
      const double n = norm(item.feature);
      require(n > 0.0, ErrorCode::invalid_argument,
              "cannot normalize zero feature: album '" + album.id + "' image '" +
                  item.image_id + "'");
      for (double& x : item.feature) x /= n;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic albums: L concept prototypes visited in order, each emitting a
// run of noisy repeats, with i.i.d. distractors interleaved. Every emitted
// feature is rounded through float32 so in-memory data matches its on-disk
// form exactly.

namespace detail {

inline Vector random_unit_vector(std::size_t dim, RngStream& rng) {
  Vector v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

inline Vector quantized(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = quantize_f32(v[i]);
  return out;
}

// Index of the member minimizing total distance to the others; ties go to
// the lowest index.
inline std::size_t medoid_of(const std::vector<std::size_t>& members, const Album& album) {
  std::size_t best = members.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t candidate : members) {
    double cost = 0.0;
    for (std::size_t other : members)
      cost += std::sqrt(squared_distance(album.feature(candidate), album.feature(other)));
    if (cost < best_cost) {
      best_cost = cost;
      best = candidate;
    }
  }
  return best;
}

}  // namespace detail

inline std::pair<Dataset, PlantedTruth> gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RngStream root(spec.seed);
  RngStream concept_rng = root.substream(streams::kGenConcept);

  std::vector<Vector> prototypes;
  prototypes.reserve(spec.num_states);
  for (std::size_t l = 0; l < spec.num_states; ++l)
    prototypes.push_back(detail::random_unit_vector(spec.dim, concept_rng));

  Dataset ds;
  ds.concept_name = "synthetic";
  ds.dim = spec.dim;
  PlantedTruth truth;
  truth.num_states = spec.num_states;

  for (std::size_t a = 0; a < spec.num_albums; ++a) {
    RngStream rng = root.substream(streams::kGenAlbum, a);
    char album_name[32];
    std::snprintf(album_name, sizeof(album_name), "a%04zu", a);
    Album album;
    album.id = album_name;

    std::vector<Vector> album_protos = prototypes;
    if (spec.prototype_noise > 0.0)
      for (Vector& p : album_protos)
        for (double& x : p) x += rng.normal(0.0, spec.prototype_noise);

    // Build the ordered list of real emissions first, then interleave
    // distractors: each emitted slot is a distractor with probability
    // distractor_prob, otherwise the next real image.
    std::vector<std::pair<Vector, int>> real;  // feature, state label
    for (std::size_t l = 0; l < spec.num_states; ++l) {
      const std::size_t repeats =
          spec.repeats_min + rng.next_below(spec.repeats_max - spec.repeats_min + 1);
      for (std::size_t r = 0; r < repeats; ++r) {
        Vector x = album_protos[l];
        if (spec.emission_noise > 0.0)
          for (double& v : x) v += rng.normal(0.0, spec.emission_noise);
        real.emplace_back(detail::quantized(x), static_cast<int>(l) + 1);
      }
    }

    AlbumTruth at;
    std::size_t next_real = 0;
    std::size_t position = 0;
    while (next_real < real.size()) {
      Vector feature;
      int label;
      if (spec.distractor_prob > 0.0 && rng.next_unit() < spec.distractor_prob) {
        feature = detail::quantized(detail::random_unit_vector(spec.dim, rng));
        label = 0;
      } else {
        feature = std::move(real[next_real].first);
        label = real[next_real].second;
        ++next_real;
      }
      char image_name[48];
      std::snprintf(image_name, sizeof(image_name), "%s_i%05zu", album.id.c_str(), position);
      AlbumItem item;
      item.image_id = image_name;
      item.timestamp = 1600000000 + static_cast<std::int64_t>(position) * 60;
      item.feature = std::move(feature);
      album.items.push_back(std::move(item));
      at.labels.push_back(label);
      ++position;
    }

    // Planted summary: the medoid of each state's run, in state order.
    for (std::size_t l = 1; l <= spec.num_states; ++l) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < at.labels.size(); ++i)
        if (at.labels[i] == static_cast<int>(l)) members.push_back(i);
      at.summary.push_back(detail::medoid_of(members, album));
    }

    truth.albums.emplace(album.id, std::move(at));
    ds.albums.push_back(std::move(album));
  }
  return {std::move(ds), std::move(truth)};
}

}  // namespace srnn
