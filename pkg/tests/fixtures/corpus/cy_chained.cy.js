describe("preferences", () => {
  it("saves a locale", () => {
    cy.visit("/settings");
    cy.get("select#locale")
      .select("fr-FR");
    cy.get("#notify")
      .check();
    cy.get("#save").click();
  });
});
