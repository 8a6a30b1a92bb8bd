// Denoiser wire protocol v1, little-endian.
//
//   request:  magic "NSMI" | version u8 = 1 | msg_type u8 = 1 | t u32 |
//             n_channels u8 (1 = unconditional, 2 = with condition) |
//             height u32 | width u32 | n_channels*H*W float32 payload
//             (channel 0 = x_t, channel 1 = condition)
//   response: magic "NSMI" | version u8 = 1 | msg_type u8 = 2 |
//             status u8 (0 = ok, 1 = error) | H*W float32 eps payload on ok,
//             else u32 length + UTF-8 error message
//
// One request in flight per connection.

export const MAGIC = Buffer.from("NSMI", "ascii");
export const VERSION = 1;
export const MSG_REQUEST = 1;
export const MSG_RESPONSE = 2;
export const STATUS_OK = 0;
export const STATUS_ERROR = 1;

export const REQUEST_HEADER_SIZE = 19; // 4s B B I B I I
export const RESPONSE_HEADER_SIZE = 7; // 4s B B B

export class ProtocolError extends Error {}

export interface Request {
  t: number;
  height: number;
  width: number;
  xT: Float32Array;
  condition: Float32Array | null;
}

export function encodeRequest(
  xT: Float32Array,
  t: number,
  height: number,
  width: number,
  condition: Float32Array | null = null,
): Buffer {
  if (xT.length !== height * width) {
    throw new ProtocolError(`x_t has ${xT.length} values for ${height}x${width}`);
  }
  const nChannels = condition === null ? 1 : 2;
  const buf = Buffer.alloc(REQUEST_HEADER_SIZE + nChannels * height * width * 4);
  MAGIC.copy(buf, 0);
  buf.writeUInt8(VERSION, 4);
  buf.writeUInt8(MSG_REQUEST, 5);
  buf.writeUInt32LE(t >>> 0, 6);
  buf.writeUInt8(nChannels, 10);
  buf.writeUInt32LE(height, 11);
  buf.writeUInt32LE(width, 15);
  let offset = REQUEST_HEADER_SIZE;
  for (let i = 0; i < xT.length; i++, offset += 4) {
    buf.writeFloatLE(xT[i], offset);
  }
  if (condition !== null) {
    if (condition.length !== height * width) {
      throw new ProtocolError(`condition has ${condition.length} values for ${height}x${width}`);
    }
    for (let i = 0; i < condition.length; i++, offset += 4) {
      buf.writeFloatLE(condition[i], offset);
    }
  }
  return buf;
}

export function encodeResponse(eps: Float32Array): Buffer {
  const buf = Buffer.alloc(RESPONSE_HEADER_SIZE + eps.length * 4);
  MAGIC.copy(buf, 0);
  buf.writeUInt8(VERSION, 4);
  buf.writeUInt8(MSG_RESPONSE, 5);
  buf.writeUInt8(STATUS_OK, 6);
  for (let i = 0; i < eps.length; i++) {
    buf.writeFloatLE(eps[i], RESPONSE_HEADER_SIZE + i * 4);
  }
  return buf;
}

export function encodeErrorResponse(message: string): Buffer {
  const data = Buffer.from(message, "utf-8");
  const buf = Buffer.alloc(RESPONSE_HEADER_SIZE + 4 + data.length);
  MAGIC.copy(buf, 0);
  buf.writeUInt8(VERSION, 4);
  buf.writeUInt8(MSG_RESPONSE, 5);
  buf.writeUInt8(STATUS_ERROR, 6);
  buf.writeUInt32LE(data.length, RESPONSE_HEADER_SIZE);
  data.copy(buf, RESPONSE_HEADER_SIZE + 4);
  return buf;
}

/**
 * Incremental request parser over a growing byte buffer.  Returns the parsed
 * request and the number of bytes consumed, or null while the buffer is
 * still incomplete.  Throws ProtocolError on malformed framing.
 */
export function tryDecodeRequest(buf: Buffer): { request: Request; consumed: number } | null {
  if (buf.length < REQUEST_HEADER_SIZE) {
    return null;
  }
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new ProtocolError(`bad request magic ${JSON.stringify(buf.subarray(0, 4).toString("latin1"))}`);
  }
  const version = buf.readUInt8(4);
  if (version !== VERSION) {
    throw new ProtocolError(`unsupported version ${version}`);
  }
  const msgType = buf.readUInt8(5);
  if (msgType !== MSG_REQUEST) {
    throw new ProtocolError(`unexpected msg_type ${msgType}`);
  }
  const t = buf.readUInt32LE(6);
  const nChannels = buf.readUInt8(10);
  if (nChannels !== 1 && nChannels !== 2) {
    throw new ProtocolError(`bad n_channels ${nChannels}`);
  }
  const height = buf.readUInt32LE(11);
  const width = buf.readUInt32LE(15);
  if (height === 0 || width === 0) {
    throw new ProtocolError(`bad dimensions ${height}x${width}`);
  }
  const payloadBytes = nChannels * height * width * 4;
  if (buf.length < REQUEST_HEADER_SIZE + payloadBytes) {
    return null;
  }
  const count = height * width;
  const xT = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    xT[i] = buf.readFloatLE(REQUEST_HEADER_SIZE + i * 4);
  }
  let condition: Float32Array | null = null;
  if (nChannels === 2) {
    condition = new Float32Array(count);
    const base = REQUEST_HEADER_SIZE + count * 4;
    for (let i = 0; i < count; i++) {
      condition[i] = buf.readFloatLE(base + i * 4);
    }
  }
  return {
    request: { t, height, width, xT, condition },
    consumed: REQUEST_HEADER_SIZE + payloadBytes,
  };
}
