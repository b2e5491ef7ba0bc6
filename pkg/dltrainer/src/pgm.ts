import * as fs from 'fs';

export interface Pgm16 {
  width: number;
  height: number;
  data: Uint16Array; // row-major
}

/** Read a binary 16-bit PGM (P5, big-endian samples). */
export function readPgm16(path: string): Pgm16 {
  const raw = fs.readFileSync(path);
  const header = raw.subarray(0, 256).toString('latin1');
  const m = /^P5\s+(?:#.*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s/.exec(header);
  if (m === null) {
    throw new Error(`${path}: not a binary PGM (P5) file`);
  }
  const width = parseInt(m[1], 10);
  const height = parseInt(m[2], 10);
  const maxval = parseInt(m[3], 10);
  if (maxval <= 255 || maxval > 65535) {
    throw new Error(`${path}: unsupported bit depth (maxval ${maxval})`);
  }
  const offset = m[0].length;
  const expected = width * height * 2;
  if (raw.length < offset + expected) {
    throw new Error(`${path}: truncated payload`);
  }
  const data = new Uint16Array(width * height);
  for (let i = 0; i < data.length; i++) {
    data[i] = raw.readUInt16BE(offset + 2 * i);
  }
  return { width, height, data };
}

export function writePgm16(img: Pgm16, path: string): void {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n65535\n`, 'latin1');
  const body = Buffer.alloc(img.data.length * 2);
  for (let i = 0; i < img.data.length; i++) {
    body.writeUInt16BE(img.data[i], 2 * i);
  }
  fs.writeFileSync(path, Buffer.concat([header, body]));
}
