#include "convseq/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace convseq {
namespace {

constexpr char kMagic[8] = {'C', 'S', 'Q', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("checkpoint truncated");
  char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

struct Slot {
  std::string name;
  Tensor* tensor;
};

std::vector<Slot> slots(Checkpoint& ck) {
  std::vector<Slot> out;
  auto gen = named_params(ck.generator);
  auto disc = named_params(ck.discriminator);
  for (const auto& p : gen) out.push_back({p.name, p.value});
  for (const auto& p : disc) out.push_back({p.name, p.value});
  auto moments = [&](const std::vector<NamedTensor>& params, AdamState& s, const std::string& tag) {
    if (s.m.size() != params.size() || s.v.size() != params.size()) {
      const std::uint64_t step = s.step;
      s = make_adam_state(params);
      s.step = step;
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      out.push_back({"adam." + tag + ".m." + params[k].name, &s.m[k]});
      out.push_back({"adam." + tag + ".v." + params[k].name, &s.v[k]});
    }
  };
  moments(gen, ck.generator_adam, "generator");
  moments(disc, ck.discriminator_adam, "discriminator");
  return out;
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Checkpoint ck = checkpoint;
  const auto table = slots(ck);

  nlohmann::json header;
  header["format"] = "convseq-checkpoint";
  header["config"] = to_config_text(ck.config);
  header["stats"] = nlohmann::json::parse(stats_to_json(ck.stats));
  header["stats_fingerprint"] = fingerprint_hex(ck.stats.fingerprint());
  header["iteration"] = ck.iteration;
  header["adam_steps"] = {{"generator", ck.generator_adam.step}, {"discriminator", ck.discriminator_adam.step}};
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& s : table) {
    tensors.push_back({{"name", s.name}, {"shape", s.tensor->shape()}, {"offset", offset}});
    offset += s.tensor->numel();
  }
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, head.size());
  out += head;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& s : table)
    for (Real v : s.tensor->data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a convseq checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto head_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + head_len > bytes.size()) throw std::runtime_error("checkpoint truncated");
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(pos, head_len));
  pos += head_len;

  Checkpoint ck;
  ck.config = parse_config_text(header.at("config").get<std::string>());
  ck.stats = stats_from_json(header.at("stats").dump());
  if (fingerprint_hex(ck.stats.fingerprint()) != header.at("stats_fingerprint").get<std::string>()) {
    throw std::runtime_error("checkpoint header is corrupt: stats fingerprint does not match embedded stats");
  }
  ck.iteration = header.at("iteration").get<std::uint64_t>();

  const GeneratorConfig gcfg = generator_config(ck.config, ck.pose_dim());
  Rng rng(0);
  ck.generator = init_generator(gcfg, rng);
  ck.discriminator = init_discriminator(discriminator_config(ck.config, ck.pose_dim()), rng);
  ck.generator_adam.step = header.at("adam_steps").at("generator").get<std::uint64_t>();
  ck.discriminator_adam.step = header.at("adam_steps").at("discriminator").get<std::uint64_t>();
  const auto table = slots(ck);

  const auto& entries = header.at("tensors");
  if (entries.size() != table.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(entries.size()) + " tensors, model expects " +
                             std::to_string(table.size()));
  }
  const std::size_t payload = pos;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& e = entries[k];
    if (e.at("name").get<std::string>() != table[k].name) {
      throw std::runtime_error("checkpoint tensor " + std::to_string(k) + " is '" + e.at("name").get<std::string>() +
                               "', expected '" + table[k].name + "'");
    }
    const Shape shape = e.at("shape").get<Shape>();
    require_shape(*table[k].tensor, shape, ("checkpoint tensor " + table[k].name).c_str());
    std::size_t at = payload + e.at("offset").get<std::size_t>() * sizeof(double);
    for (auto& v : table[k].tensor->data()) v = static_cast<Real>(std::bit_cast<double>(get_le<std::uint64_t>(bytes, at)));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& checkpoint) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file, std::optional<std::uint64_t> expected_fingerprint) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Checkpoint ck = deserialize_checkpoint(ss.str());
  if (expected_fingerprint && *expected_fingerprint != ck.stats.fingerprint()) {
    throw FingerprintMismatch("checkpoint " + file.string() + " was trained with stats " +
                              fingerprint_hex(ck.stats.fingerprint()) + " but the data uses " +
                              fingerprint_hex(*expected_fingerprint));
  }
  return ck;
}

}  // namespace convseq
