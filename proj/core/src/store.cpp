#include "layerprobe/store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"
#include "json.hpp"

namespace layerprobe {

namespace {

using nlohmann::json;

constexpr std::size_t kFixedHeaderBytes = 4 + 4 + 8;
constexpr std::size_t kPayloadAlignment = 8;

std::string invariant(const std::string& msg) { return "store invariant: " + msg; }

std::uint64_t payload_floats(const StoreMeta& m) {
  return static_cast<std::uint64_t>(m.num_layers) *
         static_cast<std::uint64_t>(m.num_tokens) *
         static_cast<std::uint64_t>(m.hidden_size);
}

template <typename T>
T byteswap(T v) {
  if constexpr (sizeof(T) == 4) return static_cast<T>(__builtin_bswap32(v));
  else return static_cast<T>(__builtin_bswap64(v));
}

template <typename T>
T load_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

json rle_encode(const std::vector<std::uint8_t>& bits) {
  json runs = json::array();
  std::size_t i = 0;
  while (i < bits.size()) {
    std::size_t j = i;
    while (j < bits.size() && bits[j] == bits[i]) ++j;
    runs.push_back(json::array({static_cast<std::uint64_t>(j - i), bits[i] ? 1 : 0}));
    i = j;
  }
  return runs;
}

std::vector<std::uint8_t> rle_decode(const json& runs) {
  std::vector<std::uint8_t> bits;
  for (const auto& run : runs) {
    if (!run.is_array() || run.size() != 2)
      fail(ErrorCode::InvariantViolation, invariant("word_first_token run must be [count,bit]"));
    const auto count = run[0].get<std::uint64_t>();
    const auto bit = run[1].get<int>();
    if (bit != 0 && bit != 1)
      fail(ErrorCode::InvariantViolation, invariant("word_first_token bit must be 0 or 1"));
    bits.insert(bits.end(), count, static_cast<std::uint8_t>(bit));
  }
  return bits;
}

json meta_to_json(const StoreMeta& m) {
  json h;
  h["model_id"] = m.model_id;
  h["num_layers"] = m.num_layers;
  h["hidden_size"] = m.hidden_size;
  h["num_tokens"] = m.num_tokens;
  h["sentence_offsets"] = m.sentence_offsets;
  h["word_first_token"] = rle_encode(m.word_first_token);
  if (m.token_texts) h["token_texts"] = *m.token_texts;
  return h;
}

StoreMeta meta_from_json(const json& h) {
  StoreMeta m;
  try {
    m.model_id = h.at("model_id").get<std::string>();
    m.num_layers = h.at("num_layers").get<std::int64_t>();
    m.hidden_size = h.at("hidden_size").get<std::int64_t>();
    m.num_tokens = h.at("num_tokens").get<std::int64_t>();
    m.sentence_offsets = h.at("sentence_offsets").get<std::vector<std::int64_t>>();
    m.word_first_token = rle_decode(h.at("word_first_token"));
    if (h.contains("token_texts") && !h["token_texts"].is_null())
      m.token_texts = h["token_texts"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvariantViolation, invariant(std::string("malformed header: ") + e.what()));
  }
  return m;
}

// Owns a read-only mapping of a whole file.
struct Mapping {
  void* addr = MAP_FAILED;
  std::size_t size = 0;
  ~Mapping() {
    if (addr != MAP_FAILED) ::munmap(addr, size);
  }
};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

std::int64_t StoreMeta::sentence_length(std::int64_t sentence) const {
  if (sentence < 0 || sentence >= num_sentences())
    fail(ErrorCode::OutOfRange, "sentence id " + std::to_string(sentence) + " out of range");
  return sentence_offsets[sentence + 1] - sentence_offsets[sentence];
}

void StoreMeta::validate() const {
  if (num_layers < 2) fail(ErrorCode::InvariantViolation, invariant("num_layers must be >= 2"));
  if (hidden_size < 1) fail(ErrorCode::InvariantViolation, invariant("hidden_size must be >= 1"));
  if (num_tokens < 1) fail(ErrorCode::InvariantViolation, invariant("num_tokens must be >= 1"));
  if (sentence_offsets.size() < 2 || sentence_offsets.front() != 0)
    fail(ErrorCode::InvariantViolation, invariant("sentence_offsets must start at 0"));
  if (sentence_offsets.back() != num_tokens)
    fail(ErrorCode::InvariantViolation, invariant("sentence_offsets must end at num_tokens"));
  for (std::size_t i = 1; i < sentence_offsets.size(); ++i)
    if (sentence_offsets[i] <= sentence_offsets[i - 1])
      fail(ErrorCode::InvariantViolation, invariant("sentence_offsets must be strictly increasing"));
  if (static_cast<std::int64_t>(word_first_token.size()) != num_tokens)
    fail(ErrorCode::InvariantViolation, invariant("word_first_token length != num_tokens"));
  if (token_texts && static_cast<std::int64_t>(token_texts->size()) != num_tokens)
    fail(ErrorCode::InvariantViolation, invariant("token_texts length != num_tokens"));
  for (std::int64_t s = 0; s < num_sentences(); ++s) {
    const auto begin = word_first_token.begin() + sentence_offsets[s];
    const auto end = word_first_token.begin() + sentence_offsets[s + 1];
    if (std::none_of(begin, end, [](std::uint8_t b) { return b != 0; }))
      fail(ErrorCode::InvariantViolation,
           invariant("sentence " + std::to_string(s) + " has no word-initial token"));
  }
}

ReprStore ReprStore::from_layers(StoreMeta meta,
                                 const std::vector<std::vector<float>>& layers) {
  meta.validate();
  if (static_cast<std::int64_t>(layers.size()) != meta.num_layers)
    fail(ErrorCode::InvariantViolation, invariant("layer count mismatch"));
  const auto per_layer = static_cast<std::size_t>(meta.num_tokens * meta.hidden_size);
  std::vector<float> payload;
  payload.reserve(per_layer * layers.size());
  for (const auto& l : layers) {
    if (l.size() != per_layer)
      fail(ErrorCode::InvariantViolation, invariant("layer matrices must share shape"));
    payload.insert(payload.end(), l.begin(), l.end());
  }
  return from_payload(std::move(meta), std::move(payload));
}

ReprStore ReprStore::from_payload(StoreMeta meta, std::vector<float> payload) {
  meta.validate();
  if (payload.size() != payload_floats(meta))
    fail(ErrorCode::InvariantViolation, invariant("payload size mismatch"));
  auto owner = std::make_shared<std::vector<float>>(std::move(payload));
  std::shared_ptr<const float> data(owner, owner->data());
  return ReprStore(std::move(meta), std::move(data), false);
}

ReprStore ReprStore::from_shared(StoreMeta meta, std::shared_ptr<const float> payload, bool mapped) {
  meta.validate();
  return ReprStore(std::move(meta), std::move(payload), mapped);
}

LayerView ReprStore::layer(std::int64_t layer) const {
  if (layer < 0 || layer >= meta_.num_layers)
    fail(ErrorCode::OutOfRange, "layer " + std::to_string(layer) + " out of range [0, " +
                                    std::to_string(meta_.num_layers) + ")");
  const auto per_layer = static_cast<std::size_t>(meta_.num_tokens * meta_.hidden_size);
  return LayerView(std::span<const float>(payload_.get() + per_layer * layer, per_layer),
                   meta_.num_tokens, meta_.hidden_size);
}

std::span<const float> ReprStore::payload() const {
  return {payload_.get(), static_cast<std::size_t>(payload_floats(meta_))};
}

bool operator==(const ReprStore& a, const ReprStore& b) {
  if (!(a.meta_ == b.meta_)) return false;
  const auto pa = a.payload();
  const auto pb = b.payload();
  return pa.size() == pb.size() &&
         std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(float)) == 0;
}

void write_store(const ReprStore& store, const std::filesystem::path& path) {
  store.meta().validate();

  std::string header = meta_to_json(store.meta()).dump();
  const std::size_t unpadded = kFixedHeaderBytes + header.size();
  const std::size_t pad = (kPayloadAlignment - unpadded % kPayloadAlignment) % kPayloadAlignment;
  header.append(pad, ' ');  // trailing JSON whitespace aligns the payload

  std::string prefix(kStoreMagic, 4);
  append_le<std::uint32_t>(prefix, kStoreVersion);
  append_le<std::uint64_t>(prefix, header.size());
  prefix += header;

  // Write next to the target and rename so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    const auto payload = store.payload();
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size_bytes()));
    } else {
      std::string buf;
      buf.reserve(payload.size_bytes());
      for (float f : payload) append_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(f));
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

ReprStore read_store(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::StoreNotFound, "store not found: " + path.string());

  auto mapping = std::make_shared<Mapping>();
  std::vector<unsigned char> fallback;
  const unsigned char* bytes = nullptr;
  std::size_t size = 0;

  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) fail(ErrorCode::Io, "cannot open " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) == 0 && st.st_size > 0) {
    mapping->size = static_cast<std::size_t>(st.st_size);
    mapping->addr = ::mmap(nullptr, mapping->size, PROT_READ, MAP_PRIVATE, fd, 0);
  }
  ::close(fd);
  if (mapping->addr != MAP_FAILED) {
    bytes = static_cast<const unsigned char*>(mapping->addr);
    size = mapping->size;
  } else {
    fallback = read_all(path);
    bytes = fallback.data();
    size = fallback.size();
  }

  if (size < 4 || std::memcmp(bytes, kStoreMagic, 4) != 0)
    fail(ErrorCode::BadMagic, "not an LPRS store: " + path.string());
  if (size < kFixedHeaderBytes) fail(ErrorCode::Truncated, "fixed header truncated");
  const auto version = load_le<std::uint32_t>(bytes + 4);
  if (version != kStoreVersion)
    fail(ErrorCode::UnsupportedVersion, "unsupported store version " + std::to_string(version));
  const auto header_len = load_le<std::uint64_t>(bytes + 8);
  if (header_len > size - kFixedHeaderBytes) fail(ErrorCode::Truncated, "JSON header truncated");

  json header;
  try {
    header = json::parse(bytes + kFixedHeaderBytes, bytes + kFixedHeaderBytes + header_len);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvariantViolation, invariant(std::string("header is not JSON: ") + e.what()));
  }
  StoreMeta meta = meta_from_json(header);
  if (meta.num_layers < 0 || meta.num_tokens < 0 || meta.hidden_size < 0)
    fail(ErrorCode::InvariantViolation, invariant("negative dimension"));

  const std::size_t offset = kFixedHeaderBytes + header_len;
  const std::uint64_t need = payload_floats(meta) * sizeof(float);
  const std::size_t have = size - offset;
  if (have < need)
    fail(ErrorCode::Truncated, "payload holds " + std::to_string(have) + " bytes, header declares " +
                                   std::to_string(need));
  if (have > need)
    fail(ErrorCode::InvariantViolation, invariant("trailing bytes after payload"));
  meta.validate();

  const unsigned char* payload_bytes = bytes + offset;
  const bool aligned = reinterpret_cast<std::uintptr_t>(payload_bytes) % alignof(float) == 0;
  if (fallback.empty() && aligned && std::endian::native == std::endian::little) {
    std::shared_ptr<const float> data(mapping, reinterpret_cast<const float*>(payload_bytes));
    return ReprStore::from_shared(std::move(meta), std::move(data), true);
  }

  std::vector<float> payload(payload_floats(meta));
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = std::bit_cast<float>(load_le<std::uint32_t>(payload_bytes + 4 * i));
  return ReprStore::from_payload(std::move(meta), std::move(payload));
}

LayerView layer_view(const ReprStore& store, std::int64_t layer) { return store.layer(layer); }

Eigen::MatrixXd mean_pool_sentences(const ReprStore& store, std::int64_t layer) {
  const LayerView view = store.layer(layer);
  const auto& offsets = store.meta().sentence_offsets;
  const std::int64_t hidden = store.hidden_size();
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(store.num_sentences(), hidden);
  for (std::int64_t s = 0; s < store.num_sentences(); ++s) {
    for (std::int64_t t = offsets[s]; t < offsets[s + 1]; ++t) {
      const auto row = view.row(t);
      for (std::int64_t j = 0; j < hidden; ++j) pooled(s, j) += row[j];
    }
    pooled.row(s) /= static_cast<double>(offsets[s + 1] - offsets[s]);
  }
  return pooled;
}

std::vector<std::int64_t> eligible_word_tokens(const StoreMeta& meta) {
  std::vector<std::int64_t> eligible;
  for (std::int64_t t = 0; t < meta.num_tokens; ++t)
    if (meta.word_first_token[t]) eligible.push_back(t);
  return eligible;
}

std::vector<std::int64_t> sample_word_tokens(const ReprStore& store, std::int64_t n,
                                             std::uint64_t seed) {
  auto eligible = eligible_word_tokens(store.meta());
  if (n < 0 || n > static_cast<std::int64_t>(eligible.size()))
    fail(ErrorCode::InsufficientTokens, "requested " + std::to_string(n) + " word tokens, only " +
                                            std::to_string(eligible.size()) + " eligible");
  // Partial Fisher-Yates: the first n slots end up a uniform sample.
  Rng rng(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(static_cast<std::size_t>(n));
  return eligible;
}

}  // namespace layerprobe
