// Server spans are UTF-8 byte offsets; JS strings are UTF-16. Split through
// the encoded bytes so the highlighted segment is byte-exact.

export interface SplitText {
  before: string;
  highlighted: string;
  after: string;
}

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function splitByByteSpan(text: string, start: number, end: number): SplitText {
  const bytes = encoder.encode(text);
  if (!(start >= 0 && start < end && end <= bytes.length)) {
    throw new RangeError(`byte span [${start}, ${end}) outside 0..${bytes.length}`);
  }
  return {
    before: decoder.decode(bytes.subarray(0, start)),
    highlighted: decoder.decode(bytes.subarray(start, end)),
    after: decoder.decode(bytes.subarray(end)),
  };
}
