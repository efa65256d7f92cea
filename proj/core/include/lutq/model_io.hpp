#pragma once

#include <string>

#include "lutq/layers.hpp"

namespace lutq {

/**
 * Chunked binary model format (all values little-endian):
 *
 *   header: magic "LUTQ" | u32 version (1) | u32 layer count | u32 flags (0)
 *   per layer: u32 kind (1 affine, 2 conv2d, 3 batchnorm) | u32 section flags
 *     affine:  O, I, activation as u32; conv2d adds Fh, Fw, stride, padding
 *     bias as f64[O]; optional w_full as f64[N]
 *     optional quantizer state: u32 K | constraint tag + payload | f64[K]
 *       dictionary | assignments packed at ceil(log2 K) bits per entry,
 *       each output row padded to a byte boundary
 *     optional activation quantizer: scheme, n_bits as u32 | f64 range | u8
 *     batchnorm: O, mode as u32 | f64 epsilon, momentum | f64[O] x 4
 *
 * Dictionaries, accumulators and statistics are stored as 64-bit floats, so a
 * save/load round trip reproduces every tensor bit-exactly. Dropping the
 * accumulators (include_full_precision = false) leaves dictionary + packed
 * assignments as the dominant payload, which is what makes the on-disk size
 * of a quantized model witness the K*32 + N*ceil(log2 K) bit budget.
 */
void save_model(const std::string& path, const Network& net, bool include_full_precision);

Network load_model(const std::string& path);

} // namespace lutq
