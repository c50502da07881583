#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgtl/dataset.hpp"
#include "emgtl/nn/network.hpp"
#include "emgtl/nn/train.hpp"

namespace emgtl {

enum class ArchitectureName { Spectrogram, Cwt, Raw, EnhancedRaw, Raw1d };

std::string to_string(ArchitectureName name);
ArchitectureName parse_architecture(const std::string& text);

/// Everything needed to rebuild a network bit for bit.
struct ArchitectureSpec {
  ArchitectureName name = ArchitectureName::Cwt;
  std::size_t num_classes = 7;
  /// Stage widths; meaning depends on the architecture:
  ///   spectrogram/cwt: conv1, conv2, conv3, fc4, fc5
  ///   raw: conv1, fc
  ///   enhanced-raw, raw-1d: conv1, conv2, fc
  std::vector<std::size_t> widths;
  double dropout = 0.5;
  /// PELU after every stage (second network of a target network).
  bool pelu_only = false;
  /// raw-1d only: EMG channels fed to the network (0-based).
  std::vector<int> channels{0, 1, 2, 3, 4, 5, 6, 7};
  std::uint64_t seed = 0;

  nn::Shape input_shape() const;
  std::size_t branch_count() const;
  std::size_t param_count_target() const;  // 0 when none is published
  double learning_rate_default() const;

  nlohmann::json to_json() const;
  static ArchitectureSpec from_json(const nlohmann::json& j);
};

ArchitectureSpec default_spec(ArchitectureName name, std::size_t num_classes = 7);
/// Narrow variant for gradient checks: same topology, a few channels per stage.
ArchitectureSpec reduced_spec(ArchitectureName name, std::size_t num_classes = 3);

/// Channels removed by the reduced-channel variant (1, 3, 5 and 8, counted from 1).
std::vector<int> four_channel_subset();

nn::Network build_network(const ArchitectureSpec& spec);
nn::Network build_spectrogram_net(std::size_t num_classes = 7, std::uint64_t seed = 0);
nn::Network build_cwt_net(std::size_t num_classes = 7, std::uint64_t seed = 0);
nn::Network build_raw_net(std::size_t num_classes = 7, std::uint64_t seed = 0);
nn::Network build_enhanced_raw_net(std::size_t num_classes = 7, std::uint64_t seed = 0);
nn::Network build_raw_1d_net(std::size_t num_classes = 7, bool four_channels = false, std::uint64_t seed = 0);

/// Batched network input for windows: (N, 4, 8, 14), (N, 12, 8, 7), (N, 1, 8, 52)
/// or (N, C, 1, 52) depending on the architecture.
nn::Tensor make_inputs(const ArchitectureSpec& spec, std::span<const Window> windows);
nn::LabeledSet make_labeled_set(const ArchitectureSpec& spec, std::span<const Window> windows);

}  // namespace emgtl
