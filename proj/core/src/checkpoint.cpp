#include "prp/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "prp/errors.hpp"

namespace prp::models {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["epoch"] = ckpt.epoch;
  header["val_loss"] = std::isfinite(ckpt.val_loss) ? nlohmann::json(ckpt.val_loss) : nlohmann::json(nullptr);
  header["config"] = ckpt.config;
  nlohmann::json table = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel();
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write checkpoint " + file.string());
  out << kCheckpointFormat << '\n' << text.size() << '\n' << text << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw InputError("failed while writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + file.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointFormat) {
    throw InputError("checkpoint " + file.string() + " has format tag '" + tag + "', expected " +
                     std::string(kCheckpointFormat));
  }
  std::string len_line;
  std::getline(in, len_line);
  size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw InputError("corrupt checkpoint header length in " + file.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (in.get() != '\n' || !in) throw InputError("truncated checkpoint header in " + file.string());

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.val_loss = header.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : header.at("val_loss").get<double>();
    ckpt.config = header.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt checkpoint header in " + file.string() + ": " + e.what());
  }
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw InputError("truncated tensor payload in " + file.string());
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace prp::models
