#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ig/dataset.hpp"
#include "ig/geometry.hpp"
#include "ig/nn/layers.hpp"
#include "ig/text_analysis.hpp"

namespace ig::model {

struct ModelConfig {
  int hidden_dim = 288;        // c
  int num_point_tokens = 256;  // p (feature tokens after sampling)
  int max_text_len = 256;
  int num_queries = 50;  // k
  int encoder_layers = 3;   // N
  int decoder_layers = 6;   // M
  int num_attention_heads = 8;
  int ffn_mult = 2;      // feed-forward width = ffn_mult * hidden_dim
  int proj_dim = 64;     // contrastive projection width
  double temperature = 0.07;
  bool normalize_projections = true;

  /// CPU-friendly preset: c=64, p=256, k=16, N=2, M=3.
  static ModelConfig desk_scale();

  void validate() const;  // c divisible by heads, k <= p, ...
  bool operator==(const ModelConfig&) const = default;
};

/// Fixed vocabulary derived from the phrase-bank lexicon, plus <unk>,
/// <pad> and the sentinel token.
class Vocab {
public:
  static const Vocab& builtin();
  int id(const std::string& token) const;  // <unk> for OOV
  int pad_id() const { return pad_id_; }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

private:
  Vocab();
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int unk_id_ = 0, pad_id_ = 0;
};

struct ModelInputs {
  std::vector<geom::Vec3> points;
  text::TokenizedText tokens;
  std::vector<geom::Box3D> candidates;
  int pad_text_to = 0;  // optional padded length (>= token count)
};

struct EncodedInputs {
  nn::Tensor P;  // p x c point features
  nn::Tensor T;  // l_pad x c text features
  nn::Tensor B;  // b x c candidate-box features
  std::vector<char> text_mask;            // l_pad validity
  std::vector<geom::Vec3> point_coords;   // p sampled centers
  std::vector<geom::Box3D> candidate_boxes;
  int valid_text_len = 0;
  bool text_truncated = false;
};

struct DecoderOutput {
  nn::Tensor queries;     // k x c
  nn::Tensor box_params;  // k x 6 (center, size); sizes positive via exp
  std::vector<geom::Box3D> pred_boxes;
  nn::Tensor verb_pos_logits;  // k x valid_text_len
  nn::Tensor query_proj;       // k x d
  nn::Tensor verb_proj;        // valid_text_len x d
  nn::Tensor object_proj;      // valid_text_len x d
  nn::Tensor candidate_confidence;  // b x 1 in (0,1)
  nn::Tensor point_scores;          // p x 1 logits, feeds point-in-target loss
  std::vector<int> selected_indices;
  std::vector<geom::Vec3> selected_coords;
  std::vector<geom::Vec3> point_coords;  // all p token coordinates
};

/// Intention-conditioned multi-instance detector: pluggable point/text
/// encoders (small trainable defaults), N fusion blocks over point, box and
/// text streams, top-k point queries, M decoder blocks, prediction heads.
class GroundingModel {
public:
  GroundingModel(ModelConfig cfg, std::uint64_t seed);

  EncodedInputs encode_modalities(const ModelInputs& in) const;
  EncodedInputs encoder_fuse(EncodedInputs e) const;
  /// Scores every point token with the point-in-target head and picks the
  /// top k (ties broken by lower index).
  std::pair<nn::Tensor, std::vector<int>> score_and_select(const nn::Tensor& fused_points,
                                                           int k) const;
  DecoderOutput decode(const nn::Tensor& initial_queries,
                       const std::vector<geom::Vec3>& selected_coords,
                       const EncodedInputs& e) const;
  DecoderOutput forward(const ModelInputs& in) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  std::vector<nn::Tensor> point_backbone_params() const;  // lr group 1
  std::vector<nn::Tensor> text_encoder_params() const;
  std::vector<nn::Tensor> other_params() const;  // everything else

  void save_checkpoint(const std::string& path) const;
  /// Rejects files whose stored config does not match `expect` (when given).
  static GroundingModel load_checkpoint(const std::string& path,
                                        const ModelConfig* expect = nullptr);

private:
  struct Blocks;
  ModelConfig cfg_;
  nn::ParamStore params_;
  std::shared_ptr<Blocks> blocks_;

  void build(std::uint64_t seed);
};

/// Proposes candidate boxes for a sample, standing in for a pretrained
/// external detector.
class CandidateSource {
public:
  virtual ~CandidateSource() = default;
  virtual std::vector<geom::Box3D> propose(const data::SceneGraph& scene,
                                           const data::IntentionSample& sample) const = 0;
};

/// Perturbs ground-truth boxes (center noise sigma = center_sigma_frac *
/// size, size noise +/- size_jitter_frac) and adds jittered distractor
/// boxes from the scene's other objects. Deterministic per sample.
class JitterOracle : public CandidateSource {
public:
  struct Config {
    double center_sigma_frac = 0.05;
    double size_jitter_frac = 0.10;
    int max_distractors = 8;
  };

  JitterOracle(Config cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}
  std::vector<geom::Box3D> propose(const data::SceneGraph& scene,
                                   const data::IntentionSample& sample) const override;

private:
  Config cfg_;
  std::uint64_t seed_;
};

/// Regenerates the scene point cloud from its boxes (surface samples),
/// deterministic in (scene_id, points_per_object, seed).
std::vector<geom::Vec3> build_point_cloud(const data::SceneGraph& scene, int points_per_object,
                                          std::uint64_t seed);

}  // namespace ig::model
