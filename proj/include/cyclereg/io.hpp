#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cyclereg/evaluation.hpp"
#include "cyclereg/optimizer.hpp"
#include "cyclereg/phantom.hpp"
#include "cyclereg/transfer.hpp"
#include "cyclereg/volume.hpp"

namespace cyclereg::io {

// On disk a volume is `<stem>.json` (UTF-8 header) next to `<stem>.raw` (little-endian
// payload, x-fastest, field components interleaved per voxel).
enum class VolumeKind { Scalar, Labels, Field };
enum class DType { F32, F64, U16 };

struct VolumeHeader {
  std::array<int, 3> dims{};
  VolumeKind kind = VolumeKind::Scalar;
  DType dtype = DType::F64;
  int channels = 1;
  std::optional<int> classes;  // labels only

  std::size_t payload_bytes() const;
  friend bool operator==(const VolumeHeader&, const VolumeHeader&) = default;
};

std::size_t dtype_size(DType d);
std::string to_string(VolumeKind k);
std::string to_string(DType d);

struct VolumeFiles {
  std::filesystem::path header;
  std::filesystem::path payload;
};

// Accepts a bare stem or a path ending in .json / .raw.
VolumeFiles volume_files(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const VolumeHeader& header,
                  const std::vector<std::byte>& payload);

struct RawVolume {
  VolumeHeader header;
  std::vector<std::byte> payload;
};

// Validates kind/dtype compatibility, payload length and, for float types, finiteness.
RawVolume read_volume(const std::filesystem::path& path);

void write_scalar(const std::filesystem::path& path, const ScalarVolume& v, DType dtype = DType::F64);
void write_labels(const std::filesystem::path& path, const LabelVolume& v);
void write_field(const std::filesystem::path& path, const DisplacementField& f,
                 DType dtype = DType::F64);

ScalarVolume read_scalar(const std::filesystem::path& path);
LabelVolume read_labels(const std::filesystem::path& path);
DisplacementField read_field(const std::filesystem::path& path);

// Flat JSON run configuration. Unknown keys are rejected; absent keys keep defaults.
SolveConfig parse_run_config(std::string_view json_text);
SolveConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const SolveConfig& config);

// phantom-gen job: atlas phantom, deformation and target noise.
struct PhantomJob {
  PhantomSpec phantom;
  DeformSpec deform;
  double target_noise_sigma = 0.02;
  std::uint64_t target_noise_seed = 7;
};

PhantomJob parse_phantom_job(std::string_view json_text);
PhantomJob load_phantom_job(const std::filesystem::path& path);

// Writes atlas, atlas_labels, target, gt_labels and gt_field into `dir`.
void write_phantom_case(const std::filesystem::path& dir, const PhantomJob& job);

std::string trace_csv(const SolveTrace& trace);
std::string cycle_report_csv(const CycleReport& report);

struct DiceRow {
  std::string case_id;
  int label = 0;
  double dice = 0.0;
};

// `case,class,dice` rows, a blank line, then `stat,value` with percentages to 1 decimal.
std::string dice_report_csv(const std::vector<DiceRow>& rows, const ScoreSummary& summary);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cyclereg::io
