#include "cyclereg/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cyclereg/errors.hpp"

namespace cyclereg::io {

using nlohmann::json;

namespace {

constexpr const char* kOrder = "x-fastest";

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  std::array<std::byte, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const std::byte* p) {
  std::array<std::byte, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

VolumeKind parse_kind(const std::string& s) {
  if (s == "scalar") return VolumeKind::Scalar;
  if (s == "labels") return VolumeKind::Labels;
  if (s == "field") return VolumeKind::Field;
  throw FormatError("unknown volume kind '" + s + "'");
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  if (s == "u16") return DType::U16;
  throw FormatError("unknown dtype '" + s + "'");
}

void check_header(const VolumeHeader& h) {
  for (int d : h.dims) {
    if (d < 2) throw FormatError("volume dimensions must be >= 2");
  }
  switch (h.kind) {
    case VolumeKind::Scalar:
      if (h.dtype == DType::U16) throw FormatError("scalar volumes must be f32 or f64");
      if (h.channels != 1) throw FormatError("scalar volumes have 1 channel");
      break;
    case VolumeKind::Labels:
      if (h.dtype != DType::U16) throw FormatError("label volumes must be u16");
      if (h.channels != 1) throw FormatError("label volumes have 1 channel");
      if (h.classes && (*h.classes < 1 || *h.classes > 65536)) {
        throw FormatError("label classes out of range");
      }
      break;
    case VolumeKind::Field:
      if (h.dtype == DType::U16) throw FormatError("fields must be f32 or f64");
      if (h.channels != 3) throw FormatError("fields have 3 channels");
      break;
  }
  if (h.classes && h.kind != VolumeKind::Labels) {
    throw FormatError("only label volumes carry a class count");
  }
}

json header_to_json(const VolumeHeader& h) {
  json j;
  j["dims"] = h.dims;
  j["kind"] = to_string(h.kind);
  j["dtype"] = to_string(h.dtype);
  j["order"] = kOrder;
  j["channels"] = h.channels;
  if (h.classes) j["classes"] = *h.classes;
  return j;
}

VolumeHeader header_from_json(const json& j) {
  static const std::set<std::string> known = {"dims", "kind", "dtype", "order", "channels",
                                              "classes"};
  if (!j.is_object()) throw FormatError("volume header must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw FormatError("unknown volume header key '" + key + "'");
  }
  try {
    VolumeHeader h;
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 3) throw FormatError("dims must have three entries");
    h.dims = {dims[0], dims[1], dims[2]};
    h.kind = parse_kind(j.at("kind").get<std::string>());
    h.dtype = parse_dtype(j.at("dtype").get<std::string>());
    if (j.at("order").get<std::string>() != kOrder) {
      throw FormatError("unsupported voxel order '" + j.at("order").get<std::string>() + "'");
    }
    h.channels = j.at("channels").get<int>();
    if (j.contains("classes")) h.classes = j.at("classes").get<int>();
    check_header(h);
    return h;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed volume header: ") + e.what());
  }
}

GridShape shape_of(const VolumeHeader& h) {
  try {
    return GridShape(h.dims[0], h.dims[1], h.dims[2]);
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
}

std::vector<std::byte> encode_reals(std::span<const double> values, DType dtype) {
  std::vector<std::byte> out;
  out.reserve(values.size() * dtype_size(dtype));
  for (double v : values) {
    if (dtype == DType::F32) {
      put_le(out, static_cast<float>(v));
    } else {
      put_le(out, v);
    }
  }
  return out;
}

std::vector<double> decode_reals(const RawVolume& raw) {
  const std::size_t width = dtype_size(raw.header.dtype);
  std::vector<double> out(raw.payload.size() / width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::byte* p = raw.payload.data() + i * width;
    out[i] = raw.header.dtype == DType::F32 ? static_cast<double>(get_le<float>(p))
                                            : get_le<double>(p);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32:
      return 4;
    case DType::F64:
      return 8;
    case DType::U16:
      return 2;
  }
  return 0;
}

std::string to_string(VolumeKind k) {
  switch (k) {
    case VolumeKind::Scalar:
      return "scalar";
    case VolumeKind::Labels:
      return "labels";
    case VolumeKind::Field:
      return "field";
  }
  return "?";
}

std::string to_string(DType d) {
  switch (d) {
    case DType::F32:
      return "f32";
    case DType::F64:
      return "f64";
    case DType::U16:
      return "u16";
  }
  return "?";
}

std::size_t VolumeHeader::payload_bytes() const {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
         static_cast<std::size_t>(dims[2]) * static_cast<std::size_t>(channels) *
         dtype_size(dtype);
}

VolumeFiles volume_files(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".json" || stem.extension() == ".raw") stem.replace_extension();
  return {std::filesystem::path(stem.string() + ".json"),
          std::filesystem::path(stem.string() + ".raw")};
}

void write_volume(const std::filesystem::path& path, const VolumeHeader& header,
                  const std::vector<std::byte>& payload) {
  check_header(header);
  if (payload.size() != header.payload_bytes()) {
    throw FormatError("payload has " + std::to_string(payload.size()) + " bytes, header expects " +
                      std::to_string(header.payload_bytes()));
  }
  const VolumeFiles files = volume_files(path);
  write_text(files.header, header_to_json(header).dump(2) + "\n");
  std::ofstream out(files.payload, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + files.payload.string() + " for writing");
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError("failed writing " + files.payload.string());
}

RawVolume read_volume(const std::filesystem::path& path) {
  const VolumeFiles files = volume_files(path);
  const json j = [&] {
    try {
      return json::parse(read_text(files.header));
    } catch (const json::exception& e) {
      throw FormatError("malformed volume header " + files.header.string() + ": " + e.what());
    }
  }();
  RawVolume raw{header_from_json(j), {}};

  std::ifstream in(files.payload, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + files.payload.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != raw.header.payload_bytes()) {
    throw FormatError("payload " + files.payload.string() + " has " + std::to_string(size) +
                      " bytes, expected " + std::to_string(raw.header.payload_bytes()));
  }
  in.seekg(0);
  raw.payload.resize(size);
  in.read(reinterpret_cast<char*>(raw.payload.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("failed reading " + files.payload.string());

  if (raw.header.dtype != DType::U16) {
    for (double v : decode_reals(raw)) {
      if (!std::isfinite(v)) throw FormatError("non-finite value in " + files.payload.string());
    }
  }
  return raw;
}

void write_scalar(const std::filesystem::path& path, const ScalarVolume& v, DType dtype) {
  const GridShape& s = v.shape();
  VolumeHeader h{{s.nx, s.ny, s.nz}, VolumeKind::Scalar, dtype, 1, std::nullopt};
  write_volume(path, h, encode_reals(v.values(), dtype));
}

void write_labels(const std::filesystem::path& path, const LabelVolume& v) {
  const GridShape& s = v.shape();
  VolumeHeader h{{s.nx, s.ny, s.nz}, VolumeKind::Labels, DType::U16, 1, v.classes()};
  std::vector<std::byte> payload;
  payload.reserve(v.size() * 2);
  for (auto id : v.ids()) put_le(payload, id);
  write_volume(path, h, payload);
}

void write_field(const std::filesystem::path& path, const DisplacementField& f, DType dtype) {
  const GridShape& s = f.shape();
  VolumeHeader h{{s.nx, s.ny, s.nz}, VolumeKind::Field, dtype, 3, std::nullopt};
  write_volume(path, h, encode_reals(f.values(), dtype));
}

ScalarVolume read_scalar(const std::filesystem::path& path) {
  RawVolume raw = read_volume(path);
  if (raw.header.kind != VolumeKind::Scalar) {
    throw FormatError(path.string() + " is a " + to_string(raw.header.kind) + " volume, not scalar");
  }
  return ScalarVolume(shape_of(raw.header), decode_reals(raw));
}

LabelVolume read_labels(const std::filesystem::path& path) {
  RawVolume raw = read_volume(path);
  if (raw.header.kind != VolumeKind::Labels) {
    throw FormatError(path.string() + " is a " + to_string(raw.header.kind) + " volume, not labels");
  }
  std::vector<std::uint16_t> ids(raw.payload.size() / 2);
  int max_id = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = get_le<std::uint16_t>(raw.payload.data() + 2 * i);
    max_id = std::max<int>(max_id, ids[i]);
  }
  const int classes = raw.header.classes.value_or(max_id + 1);
  if (max_id >= classes) {
    throw FormatError("label id " + std::to_string(max_id) + " exceeds declared classes " +
                      std::to_string(classes));
  }
  return LabelVolume(shape_of(raw.header), classes, std::move(ids));
}

DisplacementField read_field(const std::filesystem::path& path) {
  RawVolume raw = read_volume(path);
  if (raw.header.kind != VolumeKind::Field) {
    throw FormatError(path.string() + " is a " + to_string(raw.header.kind) + " volume, not field");
  }
  return DisplacementField(shape_of(raw.header), decode_reals(raw));
}

// ---------------------------------------------------------------------------

SolveConfig parse_run_config(std::string_view json_text) {
  const json j = parse_json(json_text, "run config");
  reject_unknown(j,
                 {"pyramid_levels", "iters_per_level", "stop_rel_tol", "stop_window",
                  "learning_rate", "lr_final_fraction", "lr_warmup_iters", "adam_beta1",
                  "adam_beta2", "adam_eps", "lambda1", "lambda2",
                  "charbonnier_epsilon", "charbonnier_gamma", "ncc_window_fine",
                  "ncc_window_coarse", "seed", "trans", "anatomy_cyc", "diff_cyc", "cyc"},
                 "run config");
  SolveConfig c;
  read_opt(j, "pyramid_levels", c.pyramid_levels);
  read_opt(j, "iters_per_level", c.iters_per_level);
  if (j.contains("pyramid_levels") && !j.contains("iters_per_level")) {
    // Keep the default budget shape: finest level gets the last default entry.
    const std::vector<int> defaults = SolveConfig{}.iters_per_level;
    c.iters_per_level.assign(static_cast<std::size_t>(std::max(c.pyramid_levels, 0)),
                             defaults.front());
    if (!c.iters_per_level.empty()) c.iters_per_level.back() = defaults.back();
  }
  read_opt(j, "stop_rel_tol", c.stop_rel_tol);
  read_opt(j, "stop_window", c.stop_window);
  read_opt(j, "learning_rate", c.adam.lr);
  read_opt(j, "lr_final_fraction", c.lr_final_fraction);
  read_opt(j, "lr_warmup_iters", c.lr_warmup_iters);
  read_opt(j, "adam_beta1", c.adam.beta1);
  read_opt(j, "adam_beta2", c.adam.beta2);
  read_opt(j, "adam_eps", c.adam.eps);
  read_opt(j, "lambda1", c.weights.lambda1);
  read_opt(j, "lambda2", c.weights.lambda2);
  read_opt(j, "charbonnier_epsilon", c.charbonnier.epsilon);
  read_opt(j, "charbonnier_gamma", c.charbonnier.gamma);
  read_opt(j, "ncc_window_fine", c.ncc_window_fine);
  read_opt(j, "ncc_window_coarse", c.ncc_window_coarse);
  read_opt(j, "seed", c.seed);
  read_opt(j, "trans", c.weights.toggles.trans);
  read_opt(j, "anatomy_cyc", c.weights.toggles.anatomy_cyc);
  read_opt(j, "diff_cyc", c.weights.toggles.diff_cyc);
  read_opt(j, "cyc", c.weights.toggles.cyc);
  c.validate();
  return c;
}

SolveConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path));
}

std::string run_config_json(const SolveConfig& c) {
  json j;
  j["pyramid_levels"] = c.pyramid_levels;
  j["iters_per_level"] = c.iters_per_level;
  j["stop_rel_tol"] = c.stop_rel_tol;
  j["stop_window"] = c.stop_window;
  j["learning_rate"] = c.adam.lr;
  j["lr_final_fraction"] = c.lr_final_fraction;
  j["lr_warmup_iters"] = c.lr_warmup_iters;
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["lambda1"] = c.weights.lambda1;
  j["lambda2"] = c.weights.lambda2;
  j["charbonnier_epsilon"] = c.charbonnier.epsilon;
  j["charbonnier_gamma"] = c.charbonnier.gamma;
  j["ncc_window_fine"] = c.ncc_window_fine;
  j["ncc_window_coarse"] = c.ncc_window_coarse;
  j["seed"] = c.seed;
  j["trans"] = c.weights.toggles.trans;
  j["anatomy_cyc"] = c.weights.toggles.anatomy_cyc;
  j["diff_cyc"] = c.weights.toggles.diff_cyc;
  j["cyc"] = c.weights.toggles.cyc;
  return j.dump(2) + "\n";
}

PhantomJob parse_phantom_job(std::string_view json_text) {
  const json j = parse_json(json_text, "phantom spec");
  reject_unknown(j,
                 {"shape", "num_structures", "contrasts", "noise_sigma", "edge_width", "seed",
                  "deform", "target_noise_sigma", "target_noise_seed"},
                 "phantom spec");
  PhantomJob job;
  if (j.contains("shape")) {
    std::vector<int> dims;
    read_opt(j, "shape", dims);
    if (dims.size() != 3) throw ConfigError("phantom shape must have three entries");
    try {
      job.phantom.shape = GridShape(dims[0], dims[1], dims[2]);
    } catch (const ShapeError& e) {
      throw ConfigError(e.what());
    }
  }
  read_opt(j, "num_structures", job.phantom.num_structures);
  read_opt(j, "contrasts", job.phantom.contrasts);
  read_opt(j, "noise_sigma", job.phantom.noise_sigma);
  read_opt(j, "edge_width", job.phantom.edge_width);
  read_opt(j, "seed", job.phantom.seed);
  read_opt(j, "target_noise_sigma", job.target_noise_sigma);
  read_opt(j, "target_noise_seed", job.target_noise_seed);
  if (j.contains("deform")) {
    const json& d = j.at("deform");
    reject_unknown(d, {"max_magnitude", "smoothness_sigma", "seed"}, "deform");
    read_opt(d, "max_magnitude", job.deform.max_magnitude);
    read_opt(d, "smoothness_sigma", job.deform.smoothness_sigma);
    read_opt(d, "seed", job.deform.seed);
  }
  return job;
}

PhantomJob load_phantom_job(const std::filesystem::path& path) {
  return parse_phantom_job(read_text(path));
}

void write_phantom_case(const std::filesystem::path& dir, const PhantomJob& job) {
  std::filesystem::create_directories(dir);
  const Phantom atlas = gen_phantom(job.phantom);
  const DisplacementField field = gen_smooth_field(job.phantom.shape, job.deform);
  const PhantomPair pair = make_pair(atlas.image, atlas.labels, field, job.target_noise_sigma,
                                     job.target_noise_seed);
  write_scalar(dir / "atlas", atlas.image);
  write_labels(dir / "atlas_labels", atlas.labels);
  write_scalar(dir / "target", pair.target);
  write_labels(dir / "gt_labels", pair.labels);
  write_field(dir / "gt_field", field);
}

// ---------------------------------------------------------------------------

std::string trace_csv(const SolveTrace& trace) {
  std::ostringstream os;
  os << "level,iteration,sim,smooth_f,smooth_b,cyc,trans,anatomy_cyc,diff_cyc,total,"
        "grad_norm_f,grad_norm_b\n";
  for (const TraceEntry& e : trace.entries) {
    os << e.level << ',' << e.iteration << ',' << fmt(e.terms.sim) << ',' << fmt(e.terms.smooth_f)
       << ',' << fmt(e.terms.smooth_b) << ',' << fmt(e.terms.cyc) << ',' << fmt(e.terms.trans)
       << ',' << fmt(e.terms.anatomy_cyc) << ',' << fmt(e.terms.diff_cyc) << ',' << fmt(e.total)
       << ',' << fmt(e.grad_norm_forward) << ',' << fmt(e.grad_norm_backward) << '\n';
  }
  return os.str();
}

std::string cycle_report_csv(const CycleReport& r) {
  std::ostringstream os;
  os << "quantity,value\n";
  os << "sim," << fmt(r.terms.sim) << '\n';
  os << "smooth_f," << fmt(r.terms.smooth_f) << '\n';
  os << "smooth_b," << fmt(r.terms.smooth_b) << '\n';
  os << "cyc," << fmt(r.terms.cyc) << '\n';
  os << "trans," << fmt(r.terms.trans) << '\n';
  os << "anatomy_cyc," << fmt(r.terms.anatomy_cyc) << '\n';
  os << "diff_cyc," << fmt(r.terms.diff_cyc) << '\n';
  os << "total," << fmt(r.total) << '\n';
  os << "ice_mean," << fmt(r.inverse_consistency.mean) << '\n';
  os << "ice_max," << fmt(r.inverse_consistency.max) << '\n';
  return os.str();
}

std::string dice_report_csv(const std::vector<DiceRow>& rows, const ScoreSummary& summary) {
  std::ostringstream os;
  os << "case,class,dice\n";
  for (const DiceRow& row : rows) {
    os << row.case_id << ',' << row.label << ',' << fixed(row.dice, 6) << '\n';
  }
  os << "\nstat,value\n";
  os << "mean," << fixed(100.0 * summary.mean, 1) << '\n';
  os << "std," << fixed(100.0 * summary.std, 1) << '\n';
  os << "min," << fixed(100.0 * summary.min, 1) << '\n';
  os << "max," << fixed(100.0 * summary.max, 1) << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace cyclereg::io
