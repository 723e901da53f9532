#include "rphoc/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "binary_io.hpp"

namespace rphoc {

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["architecture"] = nlohmann::ordered_json::parse(params.arch.to_json());
  header["phoc_hash"] = params.phoc_hash;
  header["iteration"] = params.iteration;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write checkpoint " + path.string());
  out.write("RPH1", 4);
  detail::write_block(out, header.dump());
  for (const auto& t : params.tensors)
    for (double v : t.values) detail::write_f64(out, v);
  if (!out) throw InvalidInput("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
  detail::expect_magic(in, "RPH1", "checkpoint " + path.string());
  ModelParams params;
  std::vector<std::string> names;
  try {
    const auto header = nlohmann::json::parse(detail::read_block(in));
    params.arch = Architecture::from_json(header.at("architecture").dump());
    params.phoc_hash = header.at("phoc_hash").get<std::string>();
    params.iteration = header.value("iteration", 0L);
    for (const auto& t : header.at("tensors")) names.push_back(t.at("name").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("checkpoint header: " + std::string(e.what()));
  }
  ModelParams layout = make_param_layout(params.arch);
  if (layout.tensors.size() != names.size())
    throw InvalidInput("checkpoint: tensor list does not match architecture");
  for (size_t i = 0; i < names.size(); ++i) {
    if (layout.tensors[i].name != names[i])
      throw InvalidInput("checkpoint: unexpected tensor '" + names[i] + "'");
    for (auto& v : layout.tensors[i].values) v = detail::read_f64(in);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw InvalidInput("checkpoint: trailing bytes after parameters");
  params.tensors = std::move(layout.tensors);
  return params;
}

}  // namespace rphoc
