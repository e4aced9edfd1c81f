#include <bit>
#include <cstring>
#include <fstream>

#include "biaslab/langmodel.hpp"

namespace biaslab::langmodel {

namespace {

constexpr char kMagic[8] = {'B', 'L', 'A', 'B', 'L', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InputError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const LanguageModel& model, const std::filesystem::path& path) {
  const auto& p = model.params();
  nlohmann::json header;
  header["config"] = model.config();
  header["vocabulary"] = {
      {"tokens", std::vector<std::string>(model.vocab().tokens().begin(), model.vocab().tokens().end())},
      {"counts", std::vector<std::uint64_t>(model.vocab().counts().begin(), model.vocab().counts().end())}};
  auto table = nlohmann::json::array();
  const auto names = p.tensor_names();
  const auto tensors = p.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    table.push_back({{"name", names[i]}, {"rows", tensors[i]->rows()}, {"cols", tensors[i]->cols()}});
  }
  header["tensors"] = table;
  header["layout"] = "row-major float32 little-endian";
  const std::string json = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, json.size());
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  for (const Matrix* m : tensors) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>((*m)(r, c))));
      }
    }
  }
  if (!out) throw InputError("failed writing checkpoint '" + path.string() + "'");
}

LanguageModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError("'" + path.string() + "' is not a model checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto json_len = read_le<std::uint64_t>(in);
  std::string json(json_len, '\0');
  if (!in.read(json.data(), static_cast<std::streamsize>(json_len))) throw InputError("checkpoint truncated");
  const auto header = nlohmann::json::parse(json);

  auto vocab = std::make_shared<const corpus::Vocabulary>(corpus::Vocabulary::from_entries(
      header.at("vocabulary").at("tokens").get<std::vector<std::string>>(),
      header.at("vocabulary").at("counts").get<std::vector<std::uint64_t>>()));
  LanguageModel model(header.at("config").get<LMConfig>(), vocab);
  auto tensors = model.params().tensors();
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size()) throw InputError("checkpoint tensor table does not match its config");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Matrix& m = *tensors[i];
    if (table[i].at("rows").get<Eigen::Index>() != m.rows() ||
        table[i].at("cols").get<Eigen::Index>() != m.cols()) {
      throw InputError("checkpoint tensor '" + table[i].at("name").get<std::string>() + "' has the wrong shape");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<double>(std::bit_cast<float>(read_le<std::uint32_t>(in)));
      }
    }
  }
  return model;
}

}  // namespace biaslab::langmodel
