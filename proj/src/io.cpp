#include "msgfield/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "msgfield/errors.hpp"
#include "msgfield/util.hpp"

namespace msgfield {

namespace {

constexpr const char* kSceneMagic = "MSGF1";
constexpr const char* kSceneFields = "mu q s o c label dynamic";

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

double parse_f64(const std::string& tok, int line) {
  size_t pos = 0;
  double v;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad float '" + tok + "'", line);
  }
  if (pos != tok.size()) throw ParseError("bad float '" + tok + "'", line);
  return v;
}

long parse_i64(const std::string& tok, int line) {
  size_t pos = 0;
  long v;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + tok + "'", line);
  }
  if (pos != tok.size()) throw ParseError("bad integer '" + tok + "'", line);
  return v;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream iss(s);
  std::vector<std::string> toks;
  std::string t;
  while (iss >> t) toks.push_back(t);
  return toks;
}

nlohmann::json parse_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON in '") + path + "': " + e.what());
  }
}

// PGM/PPM header tokens: whitespace separated, '#' starts a comment to EOL.
std::string next_pnm_token(std::istream& in) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    if (ch != EOF) ch = in.get();
  }
  if (ch == EOF) throw ParseError("truncated header");
  std::string tok;
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok;
}

int parse_pnm_dim(std::istream& in, const char* what) {
  const std::string tok = next_pnm_token(in);
  long v;
  try {
    size_t pos = 0;
    v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + tok + "'");
  }
  if (v <= 0 || v > 1 << 20) throw ParseError(std::string("bad ") + what + " '" + tok + "'");
  return static_cast<int>(v);
}

}  // namespace

void save_scene(const Scene& scene, const std::string& path) {
  scene.check_consistent();
  auto out = open_out(path);
  out << kSceneMagic << "\n";
  out << "count " << scene.primitives.size() << "\n";
  out << "fields " << kSceneFields << "\n";
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const SplatPrimitive& p = scene.primitives[i];
    const double row[13] = {p.mu.x(), p.mu.y(), p.mu.z(), p.q[0], p.q[1],
                            p.q[2],   p.q[3],   p.s.x(),  p.s.y(), p.o,
                            p.c.x(),  p.c.y(),  p.c.z()};
    for (double v : row) out << fmt_f64(v) << ' ';
    out << p.label << ' ' << int(scene.dynamic_mask[i]) << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Scene load_scene(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty file", lineno);
  if (line != kSceneMagic) throw VersionMismatch("unrecognized scene magic '" + line + "'");

  long count = -1;
  bool have_fields = false;
  while (count < 0 || !have_fields) {
    ++lineno;
    if (!std::getline(in, line)) throw ParseError("truncated header", lineno);
    const auto toks = split_ws(line);
    if (toks.empty()) throw ParseError("blank header line", lineno);
    if (toks[0] == "count") {
      if (toks.size() != 2) throw ParseError("malformed count line", lineno);
      count = parse_i64(toks[1], lineno);
      if (count < 0) throw ParseError("negative count", lineno);
    } else if (toks[0] == "fields") {
      if (line.substr(0, 7) != "fields " || line.substr(7) != kSceneFields)
        throw ParseError("unsupported field list '" + line + "'", lineno);
      have_fields = true;
    } else {
      throw ParseError("unknown header field '" + toks[0] + "'", lineno);
    }
  }

  Scene scene;
  scene.primitives.reserve(count);
  scene.dynamic_mask.reserve(count);
  for (long i = 0; i < count; ++i) {
    ++lineno;
    if (!std::getline(in, line))
      throw ParseError("expected " + std::to_string(count) + " rows, got " + std::to_string(i),
                       lineno);
    const auto toks = split_ws(line);
    if (toks.size() != 15)
      throw ParseError("expected 15 columns, got " + std::to_string(toks.size()), lineno);
    double f[13];
    for (int j = 0; j < 13; ++j) f[j] = parse_f64(toks[j], lineno);
    const long label = parse_i64(toks[13], lineno);
    const long dyn = parse_i64(toks[14], lineno);
    if (label < 0) throw ParseError("negative label", lineno);
    if (dyn != 0 && dyn != 1) throw ParseError("dynamic flag must be 0 or 1", lineno);
    try {
      scene.primitives.push_back(make_primitive(
          Vec3(f[0], f[1], f[2]), Vec4(f[3], f[4], f[5], f[6]), Vec2(f[7], f[8]), f[9],
          Vec3(f[10], f[11], f[12]), static_cast<int32_t>(label)));
    } catch (const DomainError& e) {
      throw ParseError(std::string("invalid primitive: ") + e.what(), lineno);
    }
    scene.dynamic_mask.push_back(static_cast<uint8_t>(dyn));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!split_ws(line).empty()) throw ParseError("trailing content after last row", lineno);
  }
  return scene;
}

std::vector<CameraRecord> load_camera_set(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("cameras") || !j["cameras"].is_array())
    throw ParseError("camera file must be an object with a 'cameras' array");
  std::vector<CameraRecord> out;
  for (const auto& c : j["cameras"]) {
    try {
      const auto& pose = c.at("pose");
      const auto qj = pose.at("q");
      const auto tj = pose.at("t");
      if (!qj.is_array() || qj.size() != 4 || !tj.is_array() || tj.size() != 3)
        throw ParseError("pose must hold q[4] and t[3]");
      CameraRecord rec;
      rec.id = c.at("id").get<std::string>();
      rec.cam = make_camera(c.at("width").get<int>(), c.at("height").get<int>(),
                            c.at("fx").get<double>(), c.at("fy").get<double>(),
                            c.at("cx").get<double>(), c.at("cy").get<double>(),
                            Vec4(qj[0].get<double>(), qj[1].get<double>(), qj[2].get<double>(),
                                 qj[3].get<double>()),
                            Vec3(tj[0].get<double>(), tj[1].get<double>(), tj[2].get<double>()),
                            c.at("near").get<double>(), c.at("far").get<double>());
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad camera entry: ") + e.what());
    }
  }
  return out;
}

void save_camera_set(const std::vector<CameraRecord>& cams, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rec : cams) {
    const Camera& c = rec.cam;
    nlohmann::json jc;
    jc["id"] = rec.id;
    jc["width"] = c.width;
    jc["height"] = c.height;
    jc["fx"] = c.fx;
    jc["fy"] = c.fy;
    jc["cx"] = c.cx;
    jc["cy"] = c.cy;
    jc["pose"]["q"] = {c.q[0], c.q[1], c.q[2], c.q[3]};
    jc["pose"]["t"] = {c.t.x(), c.t.y(), c.t.z()};
    jc["near"] = c.near_z;
    jc["far"] = c.far_z;
    arr.push_back(std::move(jc));
  }
  nlohmann::json root;
  root["cameras"] = std::move(arr);
  auto out = open_out(path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

Mask load_mask(const std::string& path) {
  auto in = open_in(path, true);
  const std::string magic = next_pnm_token(in);
  if (magic != "P5") throw VersionMismatch("expected binary PGM (P5), got '" + magic + "'");
  const int w = parse_pnm_dim(in, "width");
  const int h = parse_pnm_dim(in, "height");
  const int maxval = parse_pnm_dim(in, "maxval");
  if (maxval > 255) throw ParseError("16-bit PGM not supported (maxval " +
                                     std::to_string(maxval) + ")");
  Mask mask(w, h);
  in.read(reinterpret_cast<char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(mask.data.size()))
    throw ParseError("truncated pixel data");
  for (auto& v : mask.data) v = v >= 128 ? 1 : 0;
  return mask;
}

void save_mask(const Mask& mask, const std::string& path) {
  auto out = open_out(path, true);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

Image load_ppm(const std::string& path) {
  auto in = open_in(path, true);
  const std::string magic = next_pnm_token(in);
  if (magic != "P6") throw VersionMismatch("expected binary PPM (P6), got '" + magic + "'");
  const int w = parse_pnm_dim(in, "width");
  const int h = parse_pnm_dim(in, "height");
  const int maxval = parse_pnm_dim(in, "maxval");
  if (maxval != 255) throw ParseError("only maxval 255 PPM supported (got " +
                                      std::to_string(maxval) + ")");
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw ParseError("truncated pixel data");
  Image img(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  auto out = open_out(path, true);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::round(std::min(1.0, std::max(0.0, img.data[i])) * 255.0);
    bytes[i] = static_cast<uint8_t>(v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void save_gray(const GrayImage& img, const std::string& path) {
  auto out = open_out(path, true);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::round(std::min(1.0, std::max(0.0, img.data[i])) * 255.0);
    bytes[i] = static_cast<uint8_t>(v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void save_label_image(const LabelImage& img, const std::string& path) {
  std::vector<uint8_t> bytes(img.data.size() * 2);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const int32_t v = img.data[i];
    if (v < 0 || v > 65535)
      throw DomainError("label " + std::to_string(v) + " does not fit 16-bit PGM");
    bytes[2 * i] = static_cast<uint8_t>(v >> 8);
    bytes[2 * i + 1] = static_cast<uint8_t>(v & 0xff);
  }
  auto out = open_out(path, true);
  out << "P5\n" << img.width << " " << img.height << "\n65535\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

LabelImage load_label_image(const std::string& path) {
  auto in = open_in(path, true);
  const std::string magic = next_pnm_token(in);
  if (magic != "P5") throw VersionMismatch("expected binary PGM (P5), got '" + magic + "'");
  const int w = parse_pnm_dim(in, "width");
  const int h = parse_pnm_dim(in, "height");
  const int maxval = parse_pnm_dim(in, "maxval");
  if (maxval != 65535)
    throw ParseError("label images use maxval 65535 (got " + std::to_string(maxval) + ")");
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw ParseError("truncated pixel data");
  LabelImage img(w, h);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = (static_cast<int32_t>(bytes[2 * i]) << 8) | bytes[2 * i + 1];
  return img;
}

namespace {

Eigen::VectorXd read_feature_vector(const nlohmann::json& arr, int dim, const std::string& what) {
  if (!arr.is_array()) throw ParseError(what + " must be an array");
  if (static_cast<int>(arr.size()) != dim)
    throw DimMismatch(what + " has " + std::to_string(arr.size()) + " entries, expected " +
                      std::to_string(dim));
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!arr[i].is_number()) throw ParseError(what + " holds a non-numeric entry");
    v[i] = arr[i].get<double>();
  }
  const double n = v.norm();
  if (n <= 1e-12) throw DomainError(what + " is a zero vector");
  if (std::abs(n - 1.0) > 1e-3)
    std::cerr << "warning: " << what << " norm " << n << " far from 1; renormalizing\n";
  if (std::abs(n - 1.0) > 1e-9) v /= n;
  return v;
}

}  // namespace

FeatureFile load_features(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  FeatureFile out;
  try {
    out.dim = j.at("dim").get<int>();
    if (out.dim <= 0) throw ParseError("dim must be positive");
    const auto& canon = j.at("canon");
    if (!canon.is_array()) throw ParseError("'canon' must be an array of vectors");
    for (size_t i = 0; i < canon.size(); ++i)
      out.canon.push_back(read_feature_vector(canon[i], out.dim, "canon[" + std::to_string(i) + "]"));
    const auto& objects = j.at("objects");
    if (!objects.is_object()) throw ParseError("'objects' must map labels to vectors");
    for (auto it = objects.begin(); it != objects.end(); ++it) {
      long label;
      try {
        size_t pos = 0;
        label = std::stol(it.key(), &pos);
        if (pos != it.key().size()) throw std::invalid_argument(it.key());
      } catch (const std::exception&) {
        throw ParseError("object key '" + it.key() + "' is not an integer label");
      }
      if (label <= 0) throw ParseError("object label must be positive, got '" + it.key() + "'");
      out.objects[static_cast<int32_t>(label)] =
          read_feature_vector(it.value(), out.dim, "objects['" + it.key() + "']");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad feature file: ") + e.what());
  }
  return out;
}

namespace {

constexpr const char* kTrajMagic = "MSGT1";

uint64_t coeff_digest(const std::vector<Eigen::VectorXd>& coeffs) {
  Digest d;
  d.i64(static_cast<int64_t>(coeffs.size()));
  for (const auto& w : coeffs) {
    d.i64(w.size());
    for (int i = 0; i < w.size(); ++i) d.f64(w[i]);
  }
  return d.value();
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

nlohmann::json vec_to_json(const double* v, int n) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < n; ++i) arr.push_back(v[i]);
  return arr;
}

void json_to_vec(const nlohmann::json& arr, double* v, int n, const char* what, int line) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != n)
    throw ParseError(std::string(what) + " must be an array of " + std::to_string(n) + " numbers",
                     line);
  for (int i = 0; i < n; ++i) {
    if (!arr[i].is_number()) throw ParseError(std::string(what) + " holds a non-number", line);
    v[i] = arr[i].get<double>();
  }
}

}  // namespace

void save_trajectory(const MotionField& field, const std::vector<double>& frame_loss,
                     const std::string& path) {
  check_motion_field(field);
  if (frame_loss.size() != field.timesteps.size())
    throw ShapeMismatch("need one loss per timestep, got " + std::to_string(frame_loss.size()) +
                        " for " + std::to_string(field.timesteps.size()));
  auto out = open_out(path);
  nlohmann::json head;
  head["magic"] = kTrajMagic;
  head["mode"] = field.mode == MotionMode::kRigid ? "rigid" : "nonrigid";
  head["bases"] = field.basis_count;
  head["coeffs"] = nlohmann::json::array();
  for (const auto& w : field.coeffs)
    head["coeffs"].push_back(vec_to_json(w.data(), static_cast<int>(w.size())));
  out << head.dump() << "\n";
  const std::string digest = hex64(coeff_digest(field.coeffs));
  for (size_t fi = 0; fi < field.timesteps.size(); ++fi) {
    nlohmann::json rec;
    rec["t"] = field.timesteps[fi];
    rec["loss"] = frame_loss[fi];
    rec["deltas"] = nlohmann::json::array();
    for (const auto& d : field.bases[fi]) {
      nlohmann::json jd;
      jd["dmu"] = vec_to_json(d.dmu.data(), 3);
      jd["dq"] = vec_to_json(d.dq.data(), 4);
      rec["deltas"].push_back(std::move(jd));
    }
    if (field.mode == MotionMode::kRigid) {
      const Mat4 m = rigid_se3(field, field.timesteps[fi]);
      rec["se3"] = nlohmann::json::array();
      for (int r = 0; r < 4; ++r) {
        const double row[4] = {m(r, 0), m(r, 1), m(r, 2), m(r, 3)};
        rec["se3"].push_back(vec_to_json(row, 4));
      }
    } else {
      rec["coeff_digest"] = digest;
    }
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

TrajectoryFile load_trajectory(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty trajectory file", lineno);
  nlohmann::json head;
  try {
    head = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON header: ") + e.what(), lineno);
  }
  TrajectoryFile out;
  try {
    if (!head.contains("magic") || head["magic"] != kTrajMagic)
      throw VersionMismatch("unrecognized trajectory magic");
    const std::string mode = head.at("mode").get<std::string>();
    if (mode == "rigid") {
      out.field.mode = MotionMode::kRigid;
    } else if (mode == "nonrigid") {
      out.field.mode = MotionMode::kNonrigid;
    } else {
      throw ParseError("unknown mode '" + mode + "'", lineno);
    }
    out.field.basis_count = head.at("bases").get<int>();
    if (out.field.basis_count < 1) throw ParseError("basis count must be >= 1", lineno);
    for (const auto& row : head.at("coeffs")) {
      Eigen::VectorXd w(out.field.basis_count);
      json_to_vec(row, w.data(), out.field.basis_count, "coefficient row", lineno);
      out.field.coeffs.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad trajectory header: ") + e.what(), lineno);
  }
  const std::string digest = hex64(coeff_digest(out.field.coeffs));

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON record: ") + e.what(), lineno);
    }
    try {
      out.field.timesteps.push_back(rec.at("t").get<int>());
      out.frame_loss.push_back(rec.at("loss").get<double>());
      const auto& deltas = rec.at("deltas");
      if (!deltas.is_array() || static_cast<int>(deltas.size()) != out.field.basis_count)
        throw ParseError("expected one delta per basis", lineno);
      std::vector<BasisDelta> frame(out.field.basis_count);
      for (int b = 0; b < out.field.basis_count; ++b) {
        json_to_vec(deltas[b].at("dmu"), frame[b].dmu.data(), 3, "dmu", lineno);
        json_to_vec(deltas[b].at("dq"), frame[b].dq.data(), 4, "dq", lineno);
      }
      out.field.bases.push_back(std::move(frame));
      if (out.field.mode == MotionMode::kNonrigid) {
        if (rec.at("coeff_digest").get<std::string>() != digest)
          throw ParseError("coefficient digest mismatch", lineno);
      } else {
        Mat4 m;
        const auto& se3 = rec.at("se3");
        if (!se3.is_array() || se3.size() != 4) throw ParseError("se3 must be 4x4", lineno);
        for (int r = 0; r < 4; ++r) {
          double row[4];
          json_to_vec(se3[r], row, 4, "se3 row", lineno);
          for (int c = 0; c < 4; ++c) m(r, c) = row[c];
        }
        // The matrix is derived from the deltas; a disagreement means the
        // file was edited inconsistently.
        MotionField probe;
        probe.mode = MotionMode::kRigid;
        probe.basis_count = out.field.basis_count;
        probe.timesteps = {0};
        probe.bases = {out.field.bases.back()};
        probe.coeffs = out.field.coeffs;
        if ((m - rigid_se3(probe, 0)).cwiseAbs().maxCoeff() > 1e-9)
          throw ParseError("se3 record disagrees with its deltas", lineno);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad trajectory record: ") + e.what(), lineno);
    }
  }
  try {
    check_motion_field(out.field);
  } catch (const MsgFieldError& e) {
    throw ParseError(std::string("inconsistent trajectory: ") + e.what());
  }
  return out;
}

DetectionInput load_detections(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&base](const std::string& rel) { return (base / rel).string(); };
  DetectionInput out;
  try {
    const FeatureFile features = load_features(resolve(j.at("features").get<std::string>()));
    out.features = features.objects;
    out.canon = features.canon;
    const auto& views = j.at("views");
    if (!views.is_array()) throw ParseError("'views' must be an array");
    for (const auto& view : views) {
      DetectionView dv;
      dv.camera_id = view.at("camera").get<std::string>();
      const auto& masks = view.at("masks");
      if (!masks.is_object()) throw ParseError("'masks' must map labels to mask files");
      for (auto it = masks.begin(); it != masks.end(); ++it) {
        long label;
        try {
          size_t pos = 0;
          label = std::stol(it.key(), &pos);
          if (pos != it.key().size()) throw std::invalid_argument(it.key());
        } catch (const std::exception&) {
          throw ParseError("mask key '" + it.key() + "' is not an integer label");
        }
        if (label <= 0) throw ParseError("mask label must be positive, got '" + it.key() + "'");
        dv.masks[static_cast<int32_t>(label)] = load_mask(resolve(it.value().get<std::string>()));
      }
      out.views.push_back(std::move(dv));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad detection manifest: ") + e.what());
  }
  return out;
}

void save_features(const FeatureFile& features, const std::string& path) {
  if (features.dim <= 0) throw DomainError("feature dim must be positive");
  auto vec_json = [&](const Eigen::VectorXd& v, const std::string& what) {
    if (v.size() != features.dim)
      throw DimMismatch(what + " has " + std::to_string(v.size()) + " entries, expected " +
                        std::to_string(features.dim));
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
  };
  nlohmann::json root;
  root["dim"] = features.dim;
  root["canon"] = nlohmann::json::array();
  for (size_t i = 0; i < features.canon.size(); ++i)
    root["canon"].push_back(vec_json(features.canon[i], "canon[" + std::to_string(i) + "]"));
  root["objects"] = nlohmann::json::object();
  for (const auto& [label, v] : features.objects)
    root["objects"][std::to_string(label)] = vec_json(v, "objects['" + std::to_string(label) + "']");
  auto out = open_out(path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace msgfield
