#include "pfl/json_io.hpp"

#include <fstream>
#include <sstream>

#include "pfl/error.hpp"

namespace pfl {

Json to_json(const ModelConfig& c) {
  return Json{{"frame_dim", c.frame_dim},
              {"feature_dim", c.feature_dim},
              {"parts", c.parts},
              {"embed_dim", c.embed_dim},
              {"head_hidden", c.head_hidden}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.parts = j.value("parts", c.parts);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  return c;
}

Json to_json(const SynthConfig& c) {
  return Json{{"n_train_ids", c.n_train_ids},
              {"n_test_ids", c.n_test_ids},
              {"xv_fraction", c.xv_fraction},
              {"views", c.views},
              {"xc_views", c.xc_views},
              {"frames_per_seq", c.frames_per_seq},
              {"frame_dim", c.frame_dim},
              {"cloth_shift_magnitude", c.cloth_shift_magnitude},
              {"accessory_variation", c.accessory_variation},
              {"cloth_dims_fraction", c.cloth_dims_fraction},
              {"view_warp_strength", c.view_warp_strength},
              {"noise_std", c.noise_std},
              {"target_ratio", c.target_ratio},
              {"xv_nm_per_view", c.xv_nm_per_view},
              {"xv_bg_per_view", c.xv_bg_per_view},
              {"test_nm_per_view", c.test_nm_per_view},
              {"test_bg_per_view", c.test_bg_per_view},
              {"test_cl_per_view", c.test_cl_per_view},
              {"gallery_nm_per_view", c.gallery_nm_per_view}};
}

SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig c;
  c.n_train_ids = j.value("n_train_ids", c.n_train_ids);
  c.n_test_ids = j.value("n_test_ids", c.n_test_ids);
  c.xv_fraction = j.value("xv_fraction", c.xv_fraction);
  c.views = j.value("views", c.views);
  c.xc_views = j.value("xc_views", c.xc_views);
  c.frames_per_seq = j.value("frames_per_seq", c.frames_per_seq);
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.cloth_shift_magnitude = j.value("cloth_shift_magnitude", c.cloth_shift_magnitude);
  c.accessory_variation = j.value("accessory_variation", c.accessory_variation);
  c.cloth_dims_fraction = j.value("cloth_dims_fraction", c.cloth_dims_fraction);
  c.view_warp_strength = j.value("view_warp_strength", c.view_warp_strength);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.target_ratio = j.value("target_ratio", c.target_ratio);
  c.xv_nm_per_view = j.value("xv_nm_per_view", c.xv_nm_per_view);
  c.xv_bg_per_view = j.value("xv_bg_per_view", c.xv_bg_per_view);
  c.test_nm_per_view = j.value("test_nm_per_view", c.test_nm_per_view);
  c.test_bg_per_view = j.value("test_bg_per_view", c.test_bg_per_view);
  c.test_cl_per_view = j.value("test_cl_per_view", c.test_cl_per_view);
  c.gallery_nm_per_view = j.value("gallery_nm_per_view", c.gallery_nm_per_view);
  return c;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out.flush()) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pfl
