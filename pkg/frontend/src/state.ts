/** Session view state. History is append-only: updates return fresh arrays. */

import { AskResponse } from './types.js';

export interface HistoryItem {
  question: string;
  topAnswer: string;
  prob: number;
}

export interface ViewState {
  imageId: number | null;
  questionDraft: string;
  lastResponse: AskResponse | null;
  history: HistoryItem[];
  camVisible: boolean;
}

export function initialState(): ViewState {
  return {
    imageId: null,
    questionDraft: '',
    lastResponse: null,
    history: [],
    camVisible: true,
  };
}

export function recordResponse(state: ViewState, response: AskResponse): ViewState {
  const top = response.answers[0];
  const item: HistoryItem = {
    question: response.question,
    topAnswer: top.answer,
    prob: top.prob,
  };
  return {
    ...state,
    lastResponse: response,
    history: [...state.history, item],
  };
}

export function selectImage(state: ViewState, imageId: number): ViewState {
  return { ...state, imageId };
}

export function setDraft(state: ViewState, questionDraft: string): ViewState {
  return { ...state, questionDraft };
}

export function toggleCam(state: ViewState): ViewState {
  return { ...state, camVisible: !state.camVisible };
}
