#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "xrinit/common.hpp"
#include "xrinit/detect.hpp"
#include "xrinit/drr.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/refine.hpp"
#include "xrinit/registration.hpp"
#include "xrinit/volume.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw voxel/image files are little-endian; big-endian hosts are unsupported");

namespace xrinit {

XRINIT_DEFINE_ERROR(IoError);

using json = nlohmann::json;

/// Shortest round-trip decimal form; used everywhere a float lands in text
/// so that reports are byte-reproducible.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // trim to the shortest representation that still round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char cand[40];
    std::snprintf(cand, sizeof(cand), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(cand, "%lf", &back);
    if (back == v || (std::isnan(back) && std::isnan(v))) return cand;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// poses

inline json pose_to_json(const CameraPose& p) {
  json j;
  j["R"] = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["R"].push_back(p.rotation(r, c));
  j["t"] = {p.translation.x(), p.translation.y(), p.translation.z()};
  return j;
}

inline CameraPose pose_from_json(const json& j) {
  CameraPose p;
  const auto& r = j.at("R");
  if (r.size() != 9) throw IoError("pose: R must hold 9 row-major numbers");
  for (int i = 0; i < 9; ++i) p.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)].get<double>();
  const auto& t = j.at("t");
  if (t.size() != 3) throw IoError("pose: t must hold 3 numbers");
  for (int i = 0; i < 3; ++i) p.translation(i) = t[static_cast<std::size_t>(i)].get<double>();
  return p;
}

inline json pose_set_to_json(const PoseSet& s) {
  json j;
  j["label"] = to_string(s.label);
  j["seed"] = s.seed;
  j["poses"] = json::array();
  for (const auto& p : s.poses) j["poses"].push_back(pose_to_json(p));
  return j;
}

inline PoseSet pose_set_from_json(const json& j) {
  PoseSet s;
  const std::string label = j.at("label").get<std::string>();
  if (label == "S1") s.label = PoseSetLabel::S1;
  else if (label == "S2") s.label = PoseSetLabel::S2;
  else if (label == "S3") s.label = PoseSetLabel::S3;
  else if (label == "S4") s.label = PoseSetLabel::S4;
  else throw IoError("pose set: unknown label " + label);
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& p : j.at("poses")) s.poses.push_back(pose_from_json(p));
  return s;
}

// ---------------------------------------------------------------------------
// volumes: JSON sidecar + raw little-endian voxels, x-fastest

inline void write_volume(const Volume& v, const std::string& json_path, const std::string& raw_path,
                         const std::string& dtype = "f32") {
  if (dtype != "f32" && dtype != "i16") throw IoError("write_volume: dtype must be f32 or i16");
  json j;
  j["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
  j["spacing"] = {v.spacing.x(), v.spacing.y(), v.spacing.z()};
  j["origin"] = {v.origin.x(), v.origin.y(), v.origin.z()};
  j["dtype"] = dtype;
  j["byte_order"] = "LE";
  j["data"] = std::filesystem::path(raw_path).filename().string();
  std::ofstream js(json_path);
  if (!js) throw IoError("write_volume: cannot open " + json_path);
  js << j.dump(2) << "\n";

  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("write_volume: cannot open " + raw_path);
  if (dtype == "f32") {
    raw.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(float)));
  } else {
    std::vector<std::int16_t> buf(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i)
      buf[i] = static_cast<std::int16_t>(std::lround(std::clamp(v.values[i], -32768.0f, 32767.0f)));
    raw.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::int16_t)));
  }
}

inline Volume read_volume(const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw IoError("read_volume: cannot open " + json_path);
  json j;
  js >> j;
  Volume v;
  for (int i = 0; i < 3; ++i) {
    v.dims[static_cast<std::size_t>(i)] = j.at("dims")[static_cast<std::size_t>(i)].get<int>();
    v.spacing(i) = j.at("spacing")[static_cast<std::size_t>(i)].get<double>();
    v.origin(i) = j.at("origin")[static_cast<std::size_t>(i)].get<double>();
  }
  if (j.value("byte_order", "LE") != "LE") throw IoError("read_volume: only LE supported");
  const std::string dtype = j.at("dtype").get<std::string>();
  const std::string raw_path =
      (std::filesystem::path(json_path).parent_path() / j.at("data").get<std::string>()).string();
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("read_volume: cannot open " + raw_path);
  const std::size_t count = v.voxel_count();
  v.values.resize(count);
  if (dtype == "f32") {
    raw.read(reinterpret_cast<char*>(v.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  } else if (dtype == "i16") {
    std::vector<std::int16_t> buf(count);
    raw.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(std::int16_t)));
    for (std::size_t i = 0; i < count; ++i) v.values[i] = static_cast<float>(buf[i]);
  } else {
    throw IoError("read_volume: unknown dtype " + dtype);
  }
  if (!raw) throw IoError("read_volume: raw file truncated: " + raw_path);
  return v;
}

// ---------------------------------------------------------------------------
// landmarks CSV

inline void write_landmarks_csv(const std::vector<NamedLandmark>& landmarks, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_landmarks_csv: cannot open " + path);
  f << "name,x_mm,y_mm,z_mm\n";
  for (const auto& l : landmarks) {
    f << l.name << ',' << format_double(l.position_mm.x()) << ',' << format_double(l.position_mm.y())
      << ',' << format_double(l.position_mm.z()) << '\n';
  }
}

inline std::vector<NamedLandmark> read_landmarks_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_landmarks_csv: cannot open " + path);
  std::vector<NamedLandmark> out;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("name,", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    NamedLandmark l;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
      throw IoError("read_landmarks_csv: malformed line: " + line);
    l.name = line.substr(0, c1);
    l.position_mm.x() = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    l.position_mm.y() = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
    l.position_mm.z() = std::stod(line.substr(c3 + 1));
    out.push_back(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// detections CSV: "landmark,u,v,confidence", sentinel -1,-1 for missed

inline std::string detections_to_csv(const Detection2DSet& d) {
  std::string out = "landmark,u,v,confidence\n";
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Detection& det = d.d[j];
    out += std::to_string(j);
    out += ',';
    if (det.missed) {
      out += "-1,-1,0";
    } else {
      out += format_double(det.px.x());
      out += ',';
      out += format_double(det.px.y());
      out += ',';
      out += format_double(det.confidence);
    }
    out += '\n';
  }
  return out;
}

inline Detection2DSet detections_from_csv(const std::string& csv) {
  Detection2DSet out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    const std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty() || line.rfind("landmark,", 0) == 0) continue;
    int idx = 0;
    double u = 0, v = 0, conf = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &idx, &u, &v, &conf) != 4)
      throw IoError("detections_from_csv: malformed line: " + line);
    if (idx < 0 || idx >= kNumLandmarks) throw IoError("detections_from_csv: bad landmark index");
    Detection& det = out.d[idx];
    if (u < 0 || v < 0) {
      det = Detection{};
    } else {
      det.px = Vec2(u, v);
      det.confidence = conf;
      det.missed = false;
    }
  }
  return out;
}

inline void write_detections_csv(const Detection2DSet& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_detections_csv: cannot open " + path);
  f << detections_to_csv(d);
}

inline Detection2DSet read_detections_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_detections_csv: cannot open " + path);
  std::string csv((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return detections_from_csv(csv);
}

// ---------------------------------------------------------------------------
// images: raw float32 + sidecar; optional 8-bit PNG export

inline void write_image(const Image& img, const std::string& json_path, const std::string& raw_path) {
  json j;
  j["width"] = img.width;
  j["height"] = img.height;
  j["dtype"] = "f32";
  j["byte_order"] = "LE";
  j["data"] = std::filesystem::path(raw_path).filename().string();
  if (img.provenance) {
    j["pose"] = pose_to_json(img.provenance->pose);
    j["focal_px"] = img.provenance->intrinsics.focal_px;
    j["principal_point"] = {img.provenance->intrinsics.principal_point.x(),
                            img.provenance->intrinsics.principal_point.y()};
  }
  std::ofstream js(json_path);
  if (!js) throw IoError("write_image: cannot open " + json_path);
  js << j.dump(2) << "\n";
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("write_image: cannot open " + raw_path);
  raw.write(reinterpret_cast<const char*>(img.values.data()),
            static_cast<std::streamsize>(img.values.size() * sizeof(float)));
}

inline Image read_image(const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw IoError("read_image: cannot open " + json_path);
  json j;
  js >> j;
  Image img = Image::create(j.at("width").get<int>(), j.at("height").get<int>());
  const std::string raw_path =
      (std::filesystem::path(json_path).parent_path() / j.at("data").get<std::string>()).string();
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("read_image: cannot open " + raw_path);
  raw.read(reinterpret_cast<char*>(img.values.data()),
           static_cast<std::streamsize>(img.values.size() * sizeof(float)));
  if (!raw) throw IoError("read_image: raw file truncated: " + raw_path);
  img.recompute_max();
  if (j.contains("pose")) {
    ImageProvenance prov;
    prov.pose = pose_from_json(j.at("pose"));
    prov.intrinsics = CameraIntrinsics::default_profile();
    prov.intrinsics.width = img.width;
    prov.intrinsics.height = img.height;
    if (j.contains("focal_px")) prov.intrinsics.focal_px = j.at("focal_px").get<double>();
    if (j.contains("principal_point")) {
      prov.intrinsics.principal_point =
          Vec2(j.at("principal_point")[0].get<double>(), j.at("principal_point")[1].get<double>());
    }
    img.provenance = prov;
  }
  return img;
}

namespace detail {

inline void png_chunk(std::ofstream& f, const char type[4], const std::vector<unsigned char>& data) {
  auto be32 = [](std::uint32_t v) {
    return std::array<unsigned char, 4>{static_cast<unsigned char>(v >> 24),
                                        static_cast<unsigned char>(v >> 16),
                                        static_cast<unsigned char>(v >> 8),
                                        static_cast<unsigned char>(v)};
  };
  const auto len = be32(static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(len.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  const auto crcb = be32(crc);
  f.write(reinterpret_cast<const char*>(crcb.data()), 4);
}

}  // namespace detail

/// 8-bit grayscale PNG of the [0, max] range, for visual inspection.
inline void write_png(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_png: cannot open " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr(13);
  auto put32 = [](std::vector<unsigned char>& v, std::size_t at, std::uint32_t x) {
    v[at] = static_cast<unsigned char>(x >> 24);
    v[at + 1] = static_cast<unsigned char>(x >> 16);
    v[at + 2] = static_cast<unsigned char>(x >> 8);
    v[at + 3] = static_cast<unsigned char>(x);
  };
  put32(ihdr, 0, static_cast<std::uint32_t>(img.width));
  put32(ihdr, 4, static_cast<std::uint32_t>(img.height));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 0;   // grayscale
  ihdr[10] = 0;
  ihdr[11] = 0;
  ihdr[12] = 0;
  detail::png_chunk(f, "IHDR", ihdr);

  const float scale = img.max_value > 0.0f ? 255.0f / img.max_value : 0.0f;
  std::vector<unsigned char> scanlines;
  scanlines.reserve(static_cast<std::size_t>(img.height) * (img.width + 1));
  for (int y = 0; y < img.height; ++y) {
    scanlines.push_back(0);  // filter: none
    for (int x = 0; x < img.width; ++x) {
      const float v = std::clamp(img.at(x, y) * scale, 0.0f, 255.0f);
      scanlines.push_back(static_cast<unsigned char>(std::lround(v)));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
  std::vector<unsigned char> idat(bound);
  if (compress2(idat.data(), &bound, scanlines.data(), static_cast<uLong>(scanlines.size()), 6) != Z_OK)
    throw IoError("write_png: deflate failed");
  idat.resize(bound);
  detail::png_chunk(f, "IDAT", idat);
  detail::png_chunk(f, "IEND", {});
}

// ---------------------------------------------------------------------------
// error table: poses + per-pose detection CSV blob + per-pose distances

inline json error_table_to_json(const PoseErrorTable& t) {
  json j;
  j["schema_version"] = 1;
  j["poses"] = pose_set_to_json(t.poses);
  j["detections_csv"] = json::array();
  j["distances"] = json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    j["detections_csv"].push_back(detections_to_csv(t.detections[i]));
    json row = json::array();
    for (double d : t.distances[i]) row.push_back(d);
    j["distances"].push_back(row);
  }
  return j;
}

inline PoseErrorTable error_table_from_json(const json& j) {
  PoseErrorTable t;
  t.poses = pose_set_from_json(j.at("poses"));
  for (const auto& blob : j.at("detections_csv"))
    t.detections.push_back(detections_from_csv(blob.get<std::string>()));
  for (const auto& row : j.at("distances")) {
    std::array<double, kNumLandmarks> d{};
    if (row.size() != kNumLandmarks) throw IoError("error table: distance row must hold 23 values");
    for (int i = 0; i < kNumLandmarks; ++i) d[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(i)].get<double>();
    t.distances.push_back(d);
  }
  if (t.detections.size() != t.distances.size() || t.detections.size() != t.poses.size())
    throw IoError("error table: inconsistent lengths");
  return t;
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_json_file: cannot open " + path);
  f << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  json j;
  f >> j;
  return j;
}

inline json registration_diagnostics_to_json(const RegiDiagnostics& d) {
  json stages = json::array();
  for (const auto& s : d.stages) {
    json js;
    js["evals"] = s.evals;
    js["best_ncc"] = s.best_ncc;
    js["downsample"] = s.downsample;
    js["pose"] = pose_to_json(s.pose);
    stages.push_back(js);
  }
  json j;
  j["stages"] = stages;
  return j;
}

}  // namespace xrinit
