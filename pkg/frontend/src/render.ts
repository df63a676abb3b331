/** DOM rendering for answers, contribution bars, word tints, history.
 * No inference math here beyond display normalization; every number shown
 * comes straight from the service payload. */

import { AnswerEntry, AskResponse, WordImportanceEntry } from './types.js';
import { HistoryItem } from './state.js';

const doc = () => document;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc().createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function formatScore(value: number): string {
  return value.toFixed(2);
}

/** Two-segment horizontal bar on a diverging scale centered at zero. */
export function renderContributionBar(entry: AnswerEntry, scale: number): HTMLElement {
  const bar = el('div', 'contrib-bar');
  const halfWidth = 50; // percent of the track on each side of zero
  const segments: Array<[string, number]> = [
    ['word', entry.word_contrib],
    ['image', entry.image_contrib],
  ];
  for (const [kind, value] of segments) {
    if (value === 0) continue;
    const segment = el('span', `segment ${kind} ${value >= 0 ? 'positive' : 'negative'}`);
    const width = scale > 0 ? (Math.abs(value) / scale) * halfWidth : 0;
    segment.style.width = `${width.toFixed(2)}%`;
    segment.title = `${kind}: ${formatScore(value)}`;
    segment.dataset.kind = kind;
    segment.dataset.value = formatScore(value);
    bar.appendChild(segment);
  }
  return bar;
}

/** Top answers: one row per entry with text, probability, and the split bar. */
export function renderAnswers(container: HTMLElement, response: AskResponse): void {
  container.replaceChildren();
  const scale = Math.max(
    1e-12,
    ...response.answers.flatMap((e) => [Math.abs(e.word_contrib), Math.abs(e.image_contrib)]),
  );
  for (const entry of response.answers) {
    const row = el('div', 'answer-row');
    row.dataset.answer = entry.answer;
    row.dataset.logit = formatScore(entry.logit);
    row.dataset.wordContrib = formatScore(entry.word_contrib);
    row.dataset.imageContrib = formatScore(entry.image_contrib);
    const label = el('span', 'answer-text', entry.answer);
    const prob = el('span', 'answer-prob', `${(entry.prob * 100).toFixed(1)}%`);
    const decomposition = el(
      'span',
      'answer-split',
      `${formatScore(entry.logit)} = ${formatScore(entry.image_contrib)} [image] + ` +
        `${formatScore(entry.word_contrib)} [word]`,
    );
    row.append(label, prob, renderContributionBar(entry, scale), decomposition);
    container.appendChild(row);
  }
}

/** Inline question markup: tokens tinted by signed importance, OOV gray. */
export function renderWordImportance(container: HTMLElement, entries: WordImportanceEntry[]): void {
  container.replaceChildren();
  const scale = Math.max(1e-12, ...entries.map((e) => Math.abs(e.importance)));
  const ordered = [...entries].sort((a, b) => a.rank - b.rank);
  for (const entry of ordered) {
    const token = el('span', 'token', entry.token);
    token.dataset.importance = entry.importance.toFixed(4);
    if (entry.oov) {
      token.classList.add('oov');
      token.title = 'out of vocabulary: this word does not influence the answer';
    } else {
      const strength = Math.abs(entry.importance) / scale;
      const hue = entry.importance >= 0 ? 145 : 5;
      token.style.backgroundColor = `hsla(${hue}, 70%, 45%, ${(0.15 + 0.6 * strength).toFixed(3)})`;
      token.title = `importance ${entry.importance.toFixed(4)} (count ${entry.count})`;
    }
    container.appendChild(token);
  }
}

export function renderSideList(container: HTMLElement, title: string, entries: AnswerEntry[]): void {
  container.replaceChildren();
  container.appendChild(el('h4', undefined, title));
  const list = el('ol', 'side-list');
  for (const entry of entries) {
    list.appendChild(el('li', undefined, `${entry.answer} (${formatScore(entry.logit)})`));
  }
  container.appendChild(list);
}

export function renderHistory(container: HTMLElement, history: HistoryItem[]): void {
  container.replaceChildren();
  for (const item of [...history].reverse()) {
    const row = el('div', 'history-row');
    row.append(
      el('span', 'history-q', item.question),
      el('span', 'history-a', `${item.topAnswer} (${(item.prob * 100).toFixed(1)}%)`),
    );
    container.appendChild(row);
  }
}

export function showError(banner: HTMLElement, message: string): void {
  banner.textContent = message;
  banner.classList.remove('hidden');
}

export function clearError(banner: HTMLElement): void {
  banner.textContent = '';
  banner.classList.add('hidden');
}

/** The CAM toggle is enabled only when the response carries a grid. */
export function updateCamToggle(button: HTMLButtonElement, response: AskResponse | null): void {
  const available = !!response && !!response.cam;
  button.disabled = !available;
  button.title = available ? 'toggle the activation heatmap' : 'no activation grid for this model';
}
