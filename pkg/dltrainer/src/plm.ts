import * as fs from 'fs';

const MAGIC = 'PLM1';

/**
 * Write a loss map in the PLM format: 4-byte magic, u32-LE width and
 * height, then width*height float64-LE values, row-major. Values must be
 * nonpositive (relative power loss per pixel).
 */
export function writePlm(data: Float64Array, width: number, height: number, path: string): void {
  if (data.length !== width * height) {
    throw new Error(`loss map size ${data.length} != ${width}x${height}`);
  }
  const buf = Buffer.alloc(12 + data.length * 8);
  buf.write(MAGIC, 0, 'latin1');
  buf.writeUInt32LE(width, 4);
  buf.writeUInt32LE(height, 8);
  for (let i = 0; i < data.length; i++) {
    buf.writeDoubleLE(data[i], 12 + 8 * i);
  }
  fs.writeFileSync(path, buf);
}

export function readPlm(path: string): { width: number; height: number; data: Float64Array } {
  const raw = fs.readFileSync(path);
  if (raw.subarray(0, 4).toString('latin1') !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const width = raw.readUInt32LE(4);
  const height = raw.readUInt32LE(8);
  if (raw.length < 12 + width * height * 8) {
    throw new Error(`${path}: truncated payload`);
  }
  const data = new Float64Array(width * height);
  for (let i = 0; i < data.length; i++) {
    data[i] = raw.readDoubleLE(12 + 8 * i);
  }
  return { width, height, data };
}
