describe("crlf", () => {
  it("works with windows endings", () => {
    cy.visit("/crlf");
    cy.get("#ok").click();
  });
});
