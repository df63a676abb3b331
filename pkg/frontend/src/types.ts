/** Payload shapes served by the inference API (all numbers are already computed server-side). */

export interface AnswerEntry {
  answer: string;
  logit: number;
  prob: number;
  word_contrib: number;
  image_contrib: number;
}

export interface WordImportanceEntry {
  token: string;
  count: number;
  importance: number;
  rank: number;
  oov: boolean;
}

export interface CamPayload {
  h: number;
  w: number;
  values: number[];
  answer?: string;
}

export interface AskResponse {
  image_id: number;
  question: string;
  answers: AnswerEntry[];
  word_importance: WordImportanceEntry[];
  words_only: AnswerEntry[];
  image_only: AnswerEntry[];
  cam: CamPayload | null;
  flags: string[];
}

export interface ImageEntry {
  image_id: number;
  thumbnail: string | null;
}

export interface McResponse {
  chosen: string;
  probabilities: number[];
  mapped: boolean[];
  unscored: boolean;
}

function isNumber(x: unknown): x is number {
  return typeof x === 'number' && Number.isFinite(x);
}

function isAnswerEntry(x: unknown): x is AnswerEntry {
  const e = x as AnswerEntry;
  return (
    !!e &&
    typeof e.answer === 'string' &&
    isNumber(e.logit) &&
    isNumber(e.prob) &&
    isNumber(e.word_contrib) &&
    isNumber(e.image_contrib)
  );
}

function isImportanceEntry(x: unknown): x is WordImportanceEntry {
  const e = x as WordImportanceEntry;
  return !!e && typeof e.token === 'string' && isNumber(e.importance) && typeof e.oov === 'boolean';
}

function isCam(x: unknown): x is CamPayload {
  const c = x as CamPayload;
  return (
    !!c &&
    isNumber(c.h) &&
    isNumber(c.w) &&
    Array.isArray(c.values) &&
    c.values.length === c.h * c.w &&
    c.values.every(isNumber)
  );
}

/** Validate a raw /api/ask body; throws on anything malformed. */
export function parseAskResponse(raw: unknown): AskResponse {
  const r = raw as AskResponse;
  if (!r || typeof r !== 'object') throw new Error('response is not an object');
  if (!Array.isArray(r.answers) || r.answers.length === 0 || !r.answers.every(isAnswerEntry)) {
    throw new Error('response has no valid answers');
  }
  if (!Array.isArray(r.word_importance) || !r.word_importance.every(isImportanceEntry)) {
    throw new Error('response has invalid word importance');
  }
  if (!Array.isArray(r.words_only) || !r.words_only.every(isAnswerEntry)) {
    throw new Error('response has invalid words-only list');
  }
  if (!Array.isArray(r.image_only) || !r.image_only.every(isAnswerEntry)) {
    throw new Error('response has invalid image-only list');
  }
  if (r.cam !== null && r.cam !== undefined && !isCam(r.cam)) {
    throw new Error('response has an invalid activation grid');
  }
  return {
    image_id: r.image_id,
    question: r.question,
    answers: r.answers,
    word_importance: r.word_importance,
    words_only: r.words_only,
    image_only: r.image_only,
    cam: r.cam ?? null,
    flags: Array.isArray(r.flags) ? r.flags : [],
  };
}
