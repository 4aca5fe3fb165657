#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vidq/contrastive.hpp"
#include "vidq/ctr_model.hpp"
#include "vidq/encoder.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

// ---------------------------------------------------------------------------
// Text files. UTF-8, one record per line, tab-separated, '#' lines ignored.
// Parse errors are DataError prefixed with "<path>:<line>:".

struct PairFileRecord {
  std::string pair_id;
  Vector image_raw;
  Vector text_raw;

  friend bool operator==(const PairFileRecord&, const PairFileRecord&) = default;
};

// pair_id<TAB>img_csv<TAB>txt_csv
void write_pairs(const std::filesystem::path& path, std::span<const PairFileRecord> pairs);
std::vector<PairFileRecord> read_pairs(const std::filesystem::path& path);

// user_id<TAB>ad_id<TAB>label
void write_clicks(const std::filesystem::path& path, std::span<const ClickRecord> clicks);
std::vector<ClickRecord> read_clicks(const std::filesystem::path& path);

// ad_id<TAB>id0,id1,...,idK
void write_visual_map(const std::filesystem::path& path, const AdVisualMap& map);
AdVisualMap read_visual_map(const std::filesystem::path& path);

using Metrics = std::vector<std::pair<std::string, std::string>>;

// key<TAB>value
void write_metrics(const std::filesystem::path& path, const Metrics& metrics);
Metrics read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Binary container: "VIDQ", u32 version, u32 artifact kind, a shape header,
// then every tensor as little-endian float32 in declaration order.

inline constexpr char kMagic[4] = {'V', 'I', 'D', 'Q'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class ArtifactKind : std::uint32_t {
  kCodebooks = 1,
  kEncoder = 2,
  kCtrModel = 3,
  kQuantizerCheckpoint = 4,
};

struct QuantizerCheckpoint {
  MlpEncoder img_encoder;
  MlpEncoder txt_encoder;
  CodebookSet books;
  std::uint32_t epoch = 0;

  friend bool operator==(const QuantizerCheckpoint&, const QuantizerCheckpoint&) = default;
};

using Bytes = std::vector<std::uint8_t>;

Bytes serialize_codebooks(const CodebookSet& books);
CodebookSet deserialize_codebooks(std::span<const std::uint8_t> bytes);

Bytes serialize_encoder(const MlpEncoder& enc);
MlpEncoder deserialize_encoder(std::span<const std::uint8_t> bytes);

Bytes serialize_ctr_model(const CtrModel& model);
CtrModel deserialize_ctr_model(std::span<const std::uint8_t> bytes);

Bytes serialize_checkpoint(const QuantizerCheckpoint& ckpt);
QuantizerCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Bytes read_bytes(const std::filesystem::path& path);

inline void save_codebooks(const std::filesystem::path& p, const CodebookSet& b) { write_bytes(p, serialize_codebooks(b)); }
inline CodebookSet load_codebooks(const std::filesystem::path& p) { return deserialize_codebooks(read_bytes(p)); }
inline void save_encoder(const std::filesystem::path& p, const MlpEncoder& e) { write_bytes(p, serialize_encoder(e)); }
inline MlpEncoder load_encoder(const std::filesystem::path& p) { return deserialize_encoder(read_bytes(p)); }
inline void save_ctr_model(const std::filesystem::path& p, const CtrModel& m) { write_bytes(p, serialize_ctr_model(m)); }
inline CtrModel load_ctr_model(const std::filesystem::path& p) { return deserialize_ctr_model(read_bytes(p)); }
inline void save_checkpoint(const std::filesystem::path& p, const QuantizerCheckpoint& c) { write_bytes(p, serialize_checkpoint(c)); }
inline QuantizerCheckpoint load_checkpoint(const std::filesystem::path& p) { return deserialize_checkpoint(read_bytes(p)); }

}  // namespace vidq
