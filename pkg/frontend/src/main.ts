/** Page wiring: image picker, question box, answer panel, CAM overlay, history.
 * One request in flight at a time; input stays disabled while pending. */

import { ApiClient, ApiError, SingleFlight } from './api.js';
import { drawCamOverlay } from './heatmap.js';
import {
  clearError,
  renderAnswers,
  renderHistory,
  renderSideList,
  renderWordImportance,
  showError,
  updateCamToggle,
} from './render.js';
import { initialState, recordResponse, selectImage, setDraft, toggleCam, ViewState } from './state.js';
import { ImageEntry } from './types.js';

function resolveBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  if (fromQuery) {
    window.localStorage.setItem('bowimg-api', fromQuery);
    return fromQuery;
  }
  return window.localStorage.getItem('bowimg-api') ?? '';
}

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function start(): void {
  let state: ViewState = initialState();
  const gate = new SingleFlight();

  const baseUrlInput = byId<HTMLInputElement>('base-url');
  const imageSelect = byId<HTMLSelectElement>('image-select');
  const questionInput = byId<HTMLInputElement>('question');
  const askButton = byId<HTMLButtonElement>('ask');
  const errorBanner = byId<HTMLElement>('error-banner');
  const answersPanel = byId<HTMLElement>('answers');
  const importancePanel = byId<HTMLElement>('word-importance');
  const wordsOnlyPanel = byId<HTMLElement>('words-only');
  const imageOnlyPanel = byId<HTMLElement>('image-only');
  const historyPanel = byId<HTMLElement>('history');
  const camToggle = byId<HTMLButtonElement>('cam-toggle');
  const canvas = byId<HTMLCanvasElement>('image-canvas');
  const flagsNote = byId<HTMLElement>('flags');

  baseUrlInput.value = resolveBaseUrl();
  const client = () => new ApiClient(baseUrlInput.value);

  function setPending(pending: boolean): void {
    askButton.disabled = pending;
    questionInput.disabled = pending;
    imageSelect.disabled = pending;
  }

  function drawImagePlaceholder(entry: ImageEntry | null): void {
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    ctx.fillStyle = '#d8dde3';
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (!entry) return;
    const finish = () => {
      if (state.camVisible && state.lastResponse?.cam) {
        drawCamOverlay(canvas, state.lastResponse.cam);
      }
    };
    if (entry.thumbnail) {
      const img = new Image();
      img.onload = () => {
        ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
        finish();
      };
      img.src = new URL(entry.thumbnail, baseUrlInput.value || window.location.href).toString();
    } else {
      ctx.fillStyle = '#5d6670';
      ctx.font = '16px sans-serif';
      ctx.textAlign = 'center';
      ctx.fillText(`image ${entry.image_id}`, canvas.width / 2, canvas.height / 2);
      finish();
    }
  }

  function currentImageEntry(): ImageEntry | null {
    const value = imageSelect.value;
    if (value === '') return null;
    const option = imageSelect.selectedOptions[0];
    return { image_id: Number(value), thumbnail: option.dataset.thumbnail || null };
  }

  function redraw(): void {
    const response = state.lastResponse;
    drawImagePlaceholder(currentImageEntry());
    if (!response) return;
    renderAnswers(answersPanel, response);
    renderWordImportance(importancePanel, response.word_importance);
    renderSideList(wordsOnlyPanel, 'words only', response.words_only);
    renderSideList(imageOnlyPanel, 'image only', response.image_only);
    renderHistory(historyPanel, state.history);
    updateCamToggle(camToggle, response);
    flagsNote.textContent = response.flags.includes('empty_question')
      ? 'empty question: showing the image-only prediction'
      : '';
  }

  async function loadImages(): Promise<void> {
    try {
      const images = await client().images();
      imageSelect.replaceChildren();
      for (const entry of images) {
        const option = document.createElement('option');
        option.value = String(entry.image_id);
        option.textContent = `image ${entry.image_id}`;
        if (entry.thumbnail) option.dataset.thumbnail = entry.thumbnail;
        imageSelect.appendChild(option);
      }
      if (images.length > 0) {
        state = selectImage(state, images[0].image_id);
        drawImagePlaceholder(currentImageEntry());
      }
      clearError(errorBanner);
    } catch (err) {
      showError(errorBanner, `cannot list images: ${(err as Error).message}`);
    }
  }

  async function ask(): Promise<void> {
    const entry = currentImageEntry();
    if (!entry) {
      showError(errorBanner, 'pick an image first');
      return;
    }
    state = setDraft(selectImage(state, entry.image_id), questionInput.value);
    setPending(true);
    const outcome = await gate.run(async () => client().ask(entry.image_id, state.questionDraft));
    setPending(false);
    if (outcome === null) return; // another request was already in flight
    try {
      state = recordResponse(state, outcome);
      clearError(errorBanner);
      redraw();
    } catch (err) {
      // rendering failed on a malformed payload: report, keep previous state
      showError(errorBanner, (err as Error).message);
    }
  }

  askButton.addEventListener('click', () => {
    void ask().catch((err) => {
      setPending(false);
      const message = err instanceof ApiError ? `${err.code ?? err.status}: ${err.message}` : String(err);
      showError(errorBanner, message);
    });
  });
  questionInput.addEventListener('keydown', (event) => {
    if (event.key === 'Enter') askButton.click();
  });
  imageSelect.addEventListener('change', () => {
    const entry = currentImageEntry();
    if (entry) state = selectImage(state, entry.image_id);
    drawImagePlaceholder(entry);
  });
  camToggle.addEventListener('click', () => {
    state = toggleCam(state);
    camToggle.classList.toggle('off', !state.camVisible);
    redraw();
  });
  baseUrlInput.addEventListener('change', () => {
    window.localStorage.setItem('bowimg-api', baseUrlInput.value);
    void loadImages();
  });

  updateCamToggle(camToggle, null);
  void loadImages();
}

if (typeof window !== 'undefined' && typeof document !== 'undefined' && document.getElementById('ask')) {
  start();
}
