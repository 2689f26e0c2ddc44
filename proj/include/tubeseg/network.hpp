#pragma once

// The encoder-decoder segmentation network: ResNet-34-style encoder stages,
// spatial/channel squeeze-and-excitation attention, nearest-neighbor
// upsampling decoder and the segmentation head, assembled from the tensor
// operation set.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tubeseg/tensor.hpp"

namespace tubeseg {

enum class BlockKind { residual, bottleneck };

struct NetworkConfig {
    int in_channels = 3;
    int num_classes = 2;
    std::vector<int> stage_depths{3, 4, 6, 3};
    int base_width = 64;
    BlockKind block_kind = BlockKind::residual;
    int se_reduction = 2;
    bool attention_before_concat = false;
    bool zero_init_residual_bn = false;

    // Small preset that keeps every structural mechanism but trains in
    // minutes on a CPU.
    static NetworkConfig desk();

    void validate() const;
};

template <typename T>
struct ParamEntry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
};

// Ordered, uniquely named tensors: trainable parameters plus persistent
// buffers (batch-norm statistics). Iteration order is insertion order.
template <typename T>
class ParameterStore {
public:
    Tensor<T>& add(const std::string& name, Shape shape, bool trainable);
    Tensor<T>& get(const std::string& name);
    const Tensor<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<ParamEntry<T>>& entries() const { return entries_; }
    std::vector<ParamEntry<T>>& entries() { return entries_; }

    std::int64_t parameter_count() const;  // trainable elements only
    void zero_grads();

private:
    std::vector<ParamEntry<T>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---- block parameter bundles ----

template <typename T>
struct BnParams {
    Tensor<T> gamma, beta;
    BatchNormState<T> state;
};

template <typename T>
struct ConvBlockParams {  // conv + bn pair used throughout the encoder
    Tensor<T> weight;
    BnParams<T> bn;
    int stride = 1;
    int padding = 1;
};

template <typename T>
struct ResidualBlockParams {
    ConvBlockParams<T> conv1, conv2;
    std::optional<Tensor<T>> shortcut_weight;  // 1x1 projection when shape changes
    int stride = 1;
};

template <typename T>
struct BottleneckBlockParams {
    ConvBlockParams<T> reduce, conv, expand;
    std::optional<Tensor<T>> shortcut_weight;
    int stride = 1;
};

template <typename T>
struct CseParams {
    Tensor<T> fc1_weight, fc1_bias;  // 1x1 conv C -> C/r
    Tensor<T> fc2_weight, fc2_bias;  // 1x1 conv C/r -> C
};

template <typename T>
struct SseParams {
    Tensor<T> weight, bias;  // 1x1 conv C -> 1
};

template <typename T>
struct ScseParams {
    CseParams<T> cse;
    SseParams<T> sse;
};

template <typename T>
struct DecoderBlockParams {
    ScseParams<T> attention;
    Tensor<T> conv_weight;
    BnParams<T> bn;
};

template <typename T>
struct HeadParams {
    Tensor<T> conv1_weight;
    BnParams<T> bn;
    ScseParams<T> attention;
    Tensor<T> conv2_weight, conv2_bias;
};

// ---- block forward functions ----

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, ResidualBlockParams<T>& p, bool training);

template <typename T>
Tensor<T> bottleneck_block(const Tensor<T>& x, BottleneckBlockParams<T>& p, bool training);

template <typename T>
Tensor<T> cse(const Tensor<T>& x, const CseParams<T>& p);

template <typename T>
Tensor<T> sse(const Tensor<T>& x, const SseParams<T>& p);

template <typename T>
Tensor<T> scse(const Tensor<T>& x, const ScseParams<T>& p);

template <typename T>
Tensor<T> decoder_block(const Tensor<T>& x, const Tensor<T>& skip, DecoderBlockParams<T>& p,
                        bool training, bool attention_before_concat);

template <typename T>
Tensor<T> segmentation_head(const Tensor<T>& x, HeadParams<T>& p, bool training);

// ---- whole network ----

template <typename T>
class Network {
public:
    Network(NetworkConfig config, std::uint64_t seed);

    // Stage outputs at 1/2, 1/4, 1/8, 1/16 and 1/32 resolution.
    std::vector<Tensor<T>> encoder_forward(const Tensor<T>& image, bool training);

    Tensor<T> forward(const Tensor<T>& image, bool training);

    const NetworkConfig& config() const { return config_; }
    ParameterStore<T>& params() { return params_; }
    const ParameterStore<T>& params() const { return params_; }

private:
    struct EncoderBlock {
        std::optional<ResidualBlockParams<T>> residual;
        std::optional<BottleneckBlockParams<T>> bottleneck;
    };

    Tensor<T>& add_conv(const std::string& name, int cin, int cout, int k, std::uint64_t seed);
    Tensor<T>& add_bias(const std::string& name, int cout);
    BnParams<T> add_bn(const std::string& prefix, int c);
    ScseParams<T> add_scse(const std::string& prefix, int c, std::uint64_t seed);
    EncoderBlock add_encoder_block(const std::string& prefix, int cin, int cout, int stride,
                                   std::uint64_t seed);

    NetworkConfig config_;
    ParameterStore<T> params_;

    ConvBlockParams<T> stem_;
    std::vector<std::vector<EncoderBlock>> stages_;
    std::vector<DecoderBlockParams<T>> decoder_;
    HeadParams<T> head_;
};

}  // namespace tubeseg
