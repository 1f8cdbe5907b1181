#pragma once

#include <random>
#include <string>

#include "vmp/decoder.hpp"
#include "vmp/encoder.hpp"
#include "vmp/nn/checkpoint.hpp"
#include "vmp/nn/params.hpp"
#include "vmp/sngp.hpp"

namespace vmp {

// Full multimodal model: encoder + transformer decoder.
void init_multimodal_params(nn::ParamStore& store, const EncoderConfig& enc, const DecoderConfig& dec,
                            std::mt19937_64& rng);
DecodeVars forward_multimodal(nn::Tape& tape, nn::ParamStore& store, const EncoderConfig& enc,
                              const DecoderConfig& dec, const VectorizedScene& vs);

// Encoder-pretraining model: encoder + shallow MLP head emitting the same
// k trajectories and confidences; no transformer decoder parameters exist.
void init_pretrain_params(nn::ParamStore& store, const EncoderConfig& enc, int num_modes, int horizon,
                          int head_hidden, std::mt19937_64& rng);
DecodeVars forward_pretrain(nn::Tape& tape, nn::ParamStore& store, const EncoderConfig& enc, int num_modes,
                            int horizon, const VectorizedScene& vs);

// Checkpoint metadata entries ("meta.*") describing the stored model.
nn::Tensor encode_encoder_meta(const EncoderConfig& cfg);
EncoderConfig decode_encoder_meta(const nn::Tensor& t);
nn::Tensor encode_decoder_meta(const DecoderConfig& cfg);
DecoderConfig decode_decoder_meta(const nn::Tensor& t);
nn::Tensor encode_sngp_meta(const SngpConfig& cfg);
SngpConfig decode_sngp_meta(const nn::Tensor& t);

// All parameter values, name-sorted, ready for a checkpoint.
nn::NamedTensors store_entries(const nn::ParamStore& store);
// Loads every entry with the given prefix (or all when prefix empty).
void load_entries(nn::ParamStore& store, const nn::NamedTensors& entries, const std::string& prefix = "");

}  // namespace vmp
